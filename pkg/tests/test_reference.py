from __future__ import annotations

import numpy as np
import pytest

from junction_asym import fem
from junction_asym.composite import plate_average
from junction_asym.experiments import fit_rate
from junction_asym.reference_axisym import (AxisymDomain, build_mesh, build_rect_mesh, graded_segment,
                                            restrict_to_parts, solve_axisym, solve_reference)


@pytest.fixture(scope="module")
def alpha1_ref():
    return solve_reference(1.0, 0.05, 1.0, 1.0, 2.0, 1, f0=lambda r: 1 + r**2, f1=lambda z: np.cos(z), level=1)


def test_zero_data_gives_zero():
    sol = solve_reference(1.0, 0.05, 1.0, 1.0, 1.0, 1, level=0)
    assert np.all(sol.values == 0.0)
    (_, pv), (_, rv) = restrict_to_parts(sol)
    assert np.all(pv == 0.0) and np.all(rv == 0.0)


def test_invalid_alpha_rejected():
    with pytest.raises(ValueError):
        solve_reference(1.0, 0.05, 1.0, 1.0, 1.0, 2)
    with pytest.raises(ValueError):
        AxisymDomain(2.0, 1.0, 0.05, 1.0)


def test_log_mms_on_annulus():
    errs, hs = [], []
    for n in (8, 16, 32):
        m = build_rect_mesh(1.0, 2.0, 0.0, 1.0, n, n)
        sol = solve_axisym(None, m, dirichlet={"left": 0.0, "right": np.log(2.0)})
        xq, wq = fem.quad_points(m.vertices, m.triangles)
        uh = np.einsum("qk,mk->mq", fem.QUAD7_BARY, sol.values[m.triangles])
        errs.append(np.sqrt(np.sum(wq * 2 * np.pi * xq[..., 0] * (uh - np.log(xq[..., 0])) ** 2)))
        hs.append(1.0 / n)
    assert fit_rate(zip(hs, errs)).slope == pytest.approx(2.0, abs=0.25)


def test_alpha0_plate_mean_scales_like_inverse_h():
    sol = solve_reference(1.0, 0.05, 1.0, 1.0, 1.0, 0, f0=1.0, level=1)
    assert 0.05 * plate_average(sol) == pytest.approx(1.0, rel=0.15)


def test_dirichlet_nodes_exactly_zero(alpha1_ref):
    ids = np.unique(alpha1_ref.mesh.edges["rod_top"])
    assert np.all(alpha1_ref.values[ids] == 0.0)


def test_parts_share_the_interface(alpha1_ref):
    (pi, pv), (ri, rv) = restrict_to_parts(alpha1_ref)
    common, a, b = np.intersect1d(pi, ri, return_indices=True)
    assert len(common) > 0
    assert np.array_equal(pv[a], rv[b])
    ah = alpha1_ref.domain.rod_radius
    assert np.allclose(alpha1_ref.mesh.vertices[common, 0], ah)


def test_energy_additivity(alpha1_ref):
    d = alpha1_ref.domain
    total = d.coef_plate * alpha1_ref.part_energy(0) + d.coef_rod * alpha1_ref.part_energy(1)
    assert total == pytest.approx(alpha1_ref.energy, rel=1e-10)


def test_discrete_flux_balance(alpha1_ref):
    s = alpha1_ref.stats
    assert abs(s["load_total"] + s["dirichlet_reaction"]) <= 1e-9 * abs(s["load_total"])


def test_energy_increases_toward_limit_under_refinement():
    # with a homogeneous Dirichlet condition the discrete energy equals the load work,
    # which grows monotonically for nested conforming spaces
    energies = [solve_reference(1.0, 0.05, 1.0, 1.0, 1.0, 1, f0=1.0, level=k).energy for k in (0, 1, 2)]
    assert energies[0] < energies[1] < energies[2]
    assert energies[2] - energies[1] < energies[1] - energies[0]


def test_contrast_consistency():
    sol = solve_reference(1.0, 0.05, 1.0, 1.0, 1.0, 0, f0=1.0, f1=1.0, level=0)
    dom, m = sol.domain, sol.mesh
    swapped = solve_axisym(dom, m, source_plate=1.0, source_rod=1.0, dirichlet={"rod_top": 0.0},
                           coef=np.ones(len(m.triangles)))
    assert np.allclose(swapped.values, sol.values, rtol=0, atol=1e-12 * np.abs(sol.values).max())


def test_lateral_dirichlet_flag():
    sol = solve_reference(1.0, 0.05, 1.0, 1.0, 1.0, 1, f0=1.0, level=0, lateral_bc="dirichlet")
    assert np.all(sol.values[np.unique(sol.mesh.edges["outer"])] == 0.0)


def test_graded_segment_rings():
    x = graded_segment(1.0, 0.1)
    assert x[0] == 0.0 and x[-1] == pytest.approx(1.0)
    d = np.diff(x)
    assert np.all(d > 0)
    # six nodes at ratio 0.6 toward the singular end: the widths between them grow by 1/0.6
    assert np.allclose(d[2:7] / d[1:6], 1 / 0.6, rtol=1e-12)
    assert d[0] == pytest.approx(0.6 * d[1] / 0.4)


def test_evaluation_and_csv(alpha1_ref, tmp_path):
    m = alpha1_ref.mesh
    v = alpha1_ref(m.vertices[::97] * (1 - 1e-13))
    assert np.allclose(v, alpha1_ref.values[::97], atol=1e-9)
    alpha1_ref.to_csv(tmp_path / "ref.csv")
    data = np.loadtxt(tmp_path / "ref.csv", delimiter=",", skiprows=1)
    assert data.shape == (alpha1_ref.n_dof, 4)


def test_mesh_respects_geometry():
    dom = AxisymDomain.physical(1.0, 0.05, 1.0, 1.0, 1.0, 1)
    m = build_mesh(dom, 0)
    area, _ = fem.triangle_geometry(m.vertices, m.triangles)
    assert np.all(np.abs(area) > 0)
    assert np.abs(area).sum() == pytest.approx(1.0 * 0.05 + 0.05 * 0.95, rel=1e-12)
