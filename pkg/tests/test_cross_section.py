from __future__ import annotations

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from junction_asym.cross_section import (UnsupportedSection, compatibility_integrals, flux_identity_check,
                                         junction_constant_q, layer_flux_data, log_potential,
                                         semicylinder_growth)
from junction_asym.geometry import CrossSection

# recorded once from a Richardson extrapolation over three truncation levels
PINNED_Q_UNIT_DISK = -0.207291


def _square(side=2.0, gamma=1.0):
    s = 0.5 * side
    return CrossSection(kind="polygon", vertices=((-s, -s), (s, -s), (s, s), (-s, s)), gamma=gamma)


def square_capacity(side):
    return gamma_fn(0.25) ** 2 * side / (4 * np.pi**1.5)


@pytest.mark.parametrize("a", [1.0, 2.0, 0.3])
def test_disk_capacity_is_radius(a):
    pot = log_potential(CrossSection(kind="disk", radius=a))
    assert pot.c_log == a
    assert abs(pot([a, 0.0])[0]) < 1e-15
    assert pot([2 * a, 0.0])[0] == pytest.approx(-np.log(2) / (2 * np.pi))


def test_square_capacity_against_conformal_oracle():
    pot = log_potential(_square(2.0))
    assert square_capacity(2.0) == pytest.approx(1.1803, abs=1e-4)
    assert pot.c_log == pytest.approx(square_capacity(2.0), rel=0.01)


def test_numeric_potential_vanishes_on_the_section_and_decays():
    pot = log_potential(_square(2.0))
    edge = np.array([[1.0, 0.3], [-0.2, 1.0], [-1.0, -0.7]])
    assert np.max(np.abs(pot(edge))) < 1e-3
    far = np.array([[40.0, 0.0], [0.0, 80.0]])
    rem = np.abs(pot.remainder(far))
    assert rem[1] < rem[0] < 1e-3


@pytest.mark.parametrize("section", [CrossSection(kind="disk", radius=1.0),
                                     CrossSection(kind="disk", radius=0.3), _square(2.0),
                                     CrossSection(kind="polygon", vertices=((-1, -1), (1, -1), (0, 1)))])
def test_flux_identity(section):
    assert flux_identity_check(log_potential(section)) == pytest.approx(1.0, abs=1e-3)


def test_capacity_scaling_and_monotonicity():
    base = _square(1.0)
    assert log_potential(_square(3.0)).c_log == pytest.approx(3 * log_potential(base).c_log, rel=0.01)
    radii = [0.5, 1.0, 1.5]
    caps = [log_potential(CrossSection(kind="disk", radius=r)).c_log for r in radii]
    assert caps == sorted(caps) and caps[0] < caps[1] < caps[2]


def test_degenerate_polygon_rejected():
    sliver = CrossSection(kind="polygon", vertices=((-1, -1e-13), (1, -1e-13), (1, 1e-13), (-1, 1e-13)))
    with pytest.raises(UnsupportedSection):
        log_potential(sliver)


def test_junction_constant_refuses_polygons():
    with pytest.raises(UnsupportedSection):
        junction_constant_q(_square())


def test_semicylinder_growth_disk_example():
    sec = CrossSection(kind="disk", radius=1.0, gamma=1.0)
    pot = log_potential(sec)
    C = semicylinder_growth(sec, layer_flux_data(pot, -np.pi), 1.0, pot).C
    assert C == pytest.approx(1.0, rel=1e-10)


def test_semicylinder_growth_general_formula():
    sec = _square(2.0, gamma=2.5)
    pot = log_potential(sec)
    A = 0.7
    C = semicylinder_growth(sec, layer_flux_data(pot, A), 1.0, pot).C
    assert C == pytest.approx(-A / (sec.gamma * sec.area()), rel=1e-3)


def test_semicylinder_growth_zero_and_linearity():
    sec = CrossSection(kind="disk", radius=0.8, gamma=1.3)
    assert semicylinder_growth(sec, lambda e, z: np.zeros(len(e)), 1.0).C == 0.0
    g1 = lambda e, z: np.where(z < 0.5, e[:, 0] ** 2, 0.0)
    g2 = lambda e, z: np.where(z < 0.5, 1.0 + z, 0.0)
    a, b = 2.0, -0.5
    combo = semicylinder_growth(sec, lambda e, z: a * g1(e, z) + b * g2(e, z), 0.5).C
    parts = a * semicylinder_growth(sec, g1, 0.5).C + b * semicylinder_growth(sec, g2, 0.5).C
    assert combo == pytest.approx(parts, rel=1e-12)


def test_semicylinder_growth_needs_compact_support():
    with pytest.raises(ValueError):
        semicylinder_growth(CrossSection(kind="disk", radius=1.0), lambda e, z: 1.0, np.inf)


@pytest.fixture(scope="module")
def unit_layer():
    return junction_constant_q(CrossSection(kind="disk", radius=1.0), truncation=(32, 32), level=2)


def test_pinned_junction_constant(unit_layer):
    assert unit_layer.q == pytest.approx(PINNED_Q_UNIT_DISK, abs=1e-4)
    assert unit_layer.c_log == 1.0


def test_two_truncations_agree_within_indicator(unit_layer):
    coarse = junction_constant_q(CrossSection(kind="disk", radius=1.0), truncation=(16, 16), level=2)
    assert abs(coarse.q - unit_layer.q) < coarse.truncation_report["indicator"]


def test_truncation_tolerance_is_enforced():
    with pytest.raises(RuntimeError):
        junction_constant_q(CrossSection(kind="disk", radius=1.0), truncation=(4, 4), level=0,
                            tolerance=1e-12)


def test_compatibility_integrals_cancel(unit_layer):
    layer, cyl = compatibility_integrals(unit_layer.field)
    assert layer == pytest.approx(-1.0, abs=1e-3)
    assert cyl == pytest.approx(1.0, abs=1e-3)
    assert abs(layer + cyl) < 1e-3


def test_junction_field_far_field_forms(unit_layer):
    f = unit_layer.field
    # decaying parts are small far from the junction in both directions
    assert abs(f.decaying_part(20.0, 0.5)[0]) < 1e-2
    assert abs(f.decaying_part(0.3, 20.0)[0]) < 1e-3
