from __future__ import annotations

import numpy as np
import pytest

from junction_asym.experiments import (EXPERIMENTS, DegenerateFit, ExperimentPlan, Sources, Targets,
                                       Workbench, compile_expression, fit_rate, run)


def test_fit_rate_exact_power():
    fit = fit_rate([(h, 3 * h) for h in (0.1, 0.05, 0.025, 0.0125)])
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3), abs=1e-12)
    assert fit.residual < 1e-12 and fit.n == 4


def test_fit_rate_log_corrected_column():
    hs = (0.05, 0.025, 0.0125)
    fit = fit_rate([(h, h * (1 + abs(np.log(h))) ** 2) for h in hs])
    # hand value: ln(e(0.05)/e(0.0125)) / ln 4
    e = [h * (1 + abs(np.log(h))) ** 2 for h in hs]
    assert fit.slope == pytest.approx(np.log(e[0] / e[2]) / np.log(4), abs=2e-3)
    assert fit.slope == pytest.approx(0.5703, abs=1e-3)


def test_fit_rate_flat_column():
    assert fit_rate([(0.1, 2.0), (0.05, 2.0), (0.025, 2.0)]).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_degenerate_inputs():
    with pytest.raises(DegenerateFit):
        fit_rate([(0.1, 1.0), (0.05, 0.0), (0.025, 1.0)])
    with pytest.raises(ValueError):
        fit_rate([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(ValueError):
        fit_rate([(0.0, 1.0), (0.05, 0.5), (0.02, 0.1)])


def test_fit_rate_confidence_interval_matches_least_squares_covariance():
    from scipy import stats
    rng = np.random.default_rng(7)
    hs = 0.1 / 2 ** np.arange(6)
    errs = hs**2 * np.exp(rng.normal(0, 0.05, len(hs)))
    fit = fit_rate(zip(hs, errs))
    coef, cov = np.polyfit(np.log(hs), np.log(errs), 1, cov="unscaled")
    resid = np.log(errs) - np.polyval(coef, np.log(hs))
    sigma2 = resid @ resid / (len(hs) - 2)
    assert fit.slope == pytest.approx(coef[0], rel=1e-12)
    assert fit.ci95 == pytest.approx(stats.t.ppf(0.975, len(hs) - 2) * np.sqrt(sigma2 * cov[0, 0]), rel=1e-10)


@pytest.mark.parametrize("expr", ["__import__('os')", "r.__class__", "open('x')", "(lambda: 1)()",
                                  "y1[0]", "unknown + 1"])
def test_expressions_are_restricted(expr):
    with pytest.raises(ValueError):
        compile_expression(expr, ("y1", "y2", "r"))


def test_expression_evaluation():
    f = compile_expression("sin(pi*z) + z**2", ("z",))
    z = np.linspace(0, 1, 5)
    assert np.allclose(f(z=z), np.sin(np.pi * z) + z**2)


def test_sources_radial_check():
    assert Sources("1 + r**2").plate_radial()(np.array([0.5])) == pytest.approx(1.25)
    with pytest.raises(ValueError):
        Sources("y1").plate_radial()
    s = Sources("2", ("z",)).scaled(3.0)
    assert s.plate()(np.array([[0.1, 0.2]]))[0] == pytest.approx(6.0)
    assert s.rod(0)(np.array([0.5]))[0] == pytest.approx(1.5)


def test_targets_report_missing_keys():
    with pytest.raises(KeyError, match="targets"):
        Targets({})["flux_tol"]


def test_sweep_must_decrease(standard_workbench):
    raw = dict(standard_workbench.cfg.raw, h_sweep=[0.01, 0.02, 0.005])
    with pytest.raises(ValueError):
        Workbench.from_dict(raw).h_list


def test_unknown_numerics_key_rejected(standard_workbench):
    raw = dict(standard_workbench.cfg.raw, numerics={"plate_mesh": 0.1})
    with pytest.raises(ValueError):
        Workbench.from_dict(raw)


def test_run_unknown_experiment(fast_config):
    with pytest.raises(KeyError):
        run(ExperimentPlan(str(fast_config), "no-such-thing"))


def test_run_with_overrides_writes_tables(fast_config, tmp_path):
    rep = run(ExperimentPlan(str(fast_config), "green-diagonal", mesh_levels={"plate_mesh_size": 0.05},
                             out_dir=str(tmp_path)))
    assert rep.criterion == 2 and rep.checks
    for suffix in ("", "_slopes", "_checks"):
        assert (tmp_path / f"green-diagonal{suffix}.csv").exists()


def test_registry_covers_every_criterion():
    from junction_asym.experiments import CONVERGENCE
    assert set(CONVERGENCE) <= set(EXPERIMENTS)
    assert len(EXPERIMENTS) == 11


def test_provenance_fields(standard_workbench):
    p = standard_workbench.provenance()
    for key in ("config", "config_sha256_16", "junction_asym", "numpy", "scipy", "convention", "targets"):
        assert key in p
    assert len(p["config_sha256_16"]) == 16
