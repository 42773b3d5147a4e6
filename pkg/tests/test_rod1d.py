from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from junction_asym.rod1d import (UnknownConstant, assemble_U0_alpha0, assemble_U0_alpha1, gauss_panels,
                                 solve_dirichlet_ends, solve_hash)

Z = np.linspace(0.0, 1.0, 11)


def test_hash_profile_constant_source():
    U = solve_hash(1.0, 1.0, 1.0)
    assert U(0.0) == pytest.approx(0.5, abs=1e-13)
    assert U(1.0) == pytest.approx(0.0, abs=1e-13)
    assert U.derivative(0.0) == pytest.approx(0.0, abs=1e-13)


def test_hash_profile_linear_source():
    U = solve_hash(1.0, 2.0, lambda z: z)
    assert U(0.0) == pytest.approx(1.0 / 12.0, abs=1e-13)


def test_hash_profile_zero_source():
    assert np.all(solve_hash(1.0, 1.0, 0.0)(Z) == 0.0)
    assert np.all(solve_hash(1.0, 1.0, None)(Z) == 0.0)


def test_alpha1_zero_coefficient_is_hash():
    U = solve_hash(1.0, 1.0, lambda z: np.cos(z))
    assert np.array_equal(assemble_U0_alpha1(U, 0.0, np.pi)(Z), U(Z))


def test_alpha1_as_printed_linear_part():
    U = assemble_U0_alpha1(solve_hash(1.0, 1.0, 0.0), -np.pi, np.pi, "as_printed")
    assert np.allclose(U(Z), -(1 - Z), atol=1e-14)
    assert U.end_flux(np.pi) == pytest.approx(-np.pi, abs=1e-12)


def test_alpha1_as_printed_sum_example():
    U = assemble_U0_alpha1(solve_hash(1.0, 1.0, 1.0), np.pi, np.pi, "as_printed")
    assert U(0.0) == pytest.approx(1.5, abs=1e-13)


@given(A=st.floats(-50, 50), gamma=st.floats(0.1, 10), area=st.floats(0.05, 20), l=st.floats(0.2, 5))
@settings(max_examples=40, deadline=None)
def test_alpha1_flux_identity(A, gamma, area, l):
    base = solve_hash(l, gamma, lambda z: 1.0 + z**2)
    corrected = assemble_U0_alpha1(base, A, area)
    printed = assemble_U0_alpha1(base, A, area, "as_printed")
    assert corrected.end_flux(area) == pytest.approx(-A, abs=1e-12 * max(1.0, abs(A)))
    assert printed.end_flux(area) == pytest.approx(A, abs=1e-12 * max(1.0, abs(A)))


def test_alpha1_rejects_unknown_convention():
    with pytest.raises(ValueError):
        assemble_U0_alpha1(solve_hash(1.0, 1.0, 1.0), 1.0, 1.0, "flipped")


def test_alpha0_trivial_cases():
    zero = solve_dirichlet_ends(1.0, 1.0, 0.0, 0.0)
    src = solve_dirichlet_ends(1.0, 1.0, 1.0, 0.0)
    assert np.allclose(assemble_U0_alpha0(0.0, 0.0, 1.0, np.pi, 1.0, -1.0, src)(Z), src(Z), atol=1e-15)
    assert np.allclose(assemble_U0_alpha0(1.0, 0.0, 1.0, np.pi, 1.0, -1.0, zero)(Z), 1 - Z, atol=1e-15)


def test_alpha0_log_term():
    zero = solve_dirichlet_ends(1.0, 1.0, 0.0, 0.0)
    U = assemble_U0_alpha0(0.0, 1.0, 1.0, np.pi, 1.0, np.log(np.exp(-1.0)), zero)
    assert U(0.0) == pytest.approx(-0.5, abs=1e-14)


def test_alpha0_unknown_constant():
    zero = solve_dirichlet_ends(1.0, 1.0, 0.0, 0.0)
    U = assemble_U0_alpha0(None, 1.0, 1.0, np.pi, 1.0, -2.0, zero)
    with pytest.raises(UnknownConstant):
        U(0.5)
    assert U(0.0, A0=0.25) == pytest.approx(U.with_A0(0.25)(0.0))


def test_dirichlet_ends_harmonic():
    v = 0.7
    U = solve_dirichlet_ends(2.0, 3.0, 0.0, v)
    z = np.linspace(0, 2, 9)
    assert np.allclose(U(z), v * (1 - z / 2.0), atol=1e-15)
    assert np.all(solve_dirichlet_ends(1.0, 1.0, 0.0, 0.0)(Z) == 0.0)


def test_dirichlet_ends_constant_source():
    U = solve_dirichlet_ends(1.0, 1.0, 1.0, 0.0)
    assert U(0.5) == pytest.approx(0.125, abs=1e-13)
    assert np.allclose(U(Z), Z * (1 - Z) / 2, atol=1e-13)


@pytest.mark.parametrize("gamma, f", [(1.0, lambda z: np.cos(3 * z)), (2.5, lambda z: np.exp(-z) * z)])
def test_ode_residual(gamma, f):
    area = 0.8
    U = assemble_U0_alpha1(solve_hash(1.0, gamma, f), 0.3, area)
    z, _ = gauss_panels(0.0, 1.0, 16)
    assert np.max(np.abs(-gamma * area * U.second_derivative(z) - area * f(z))) < 1e-10


def test_linearity():
    f1, f2 = (lambda z: np.sin(z)), (lambda z: z**3)
    a, b = 1.5, -0.25
    U1 = solve_dirichlet_ends(1.0, 2.0, f1, 0.3)
    U2 = solve_dirichlet_ends(1.0, 2.0, f2, -1.0)
    U = solve_dirichlet_ends(1.0, 2.0, lambda z: a * f1(z) + b * f2(z), a * 0.3 - b)
    assert np.allclose(U(Z), a * U1(Z) + b * U2(Z), atol=1e-13)
    H1 = assemble_U0_alpha1(solve_hash(1.0, 2.0, f1), 0.4, 1.0)
    H2 = assemble_U0_alpha1(solve_hash(1.0, 2.0, f2), -2.0, 1.0)
    H = assemble_U0_alpha1(solve_hash(1.0, 2.0, lambda z: a * f1(z) + b * f2(z)), a * 0.4 - 2.0 * b, 1.0)
    assert np.allclose(H(Z), a * H1(Z) + b * H2(Z), atol=1e-13)


def test_h1_norm_of_linear_profile():
    U = solve_dirichlet_ends(1.0, 1.0, 0.0, 1.0)
    # int (1-z)^2 + 1 = 4/3
    assert U.h1_norm() == pytest.approx(np.sqrt(4.0 / 3.0), rel=1e-12)


def test_csv_export(tmp_path):
    U = solve_hash(1.0, 1.0, 1.0)
    U.to_csv(tmp_path / "rod.csv", n=21)
    data = np.loadtxt(tmp_path / "rod.csv", delimiter=",", skiprows=1)
    assert data.shape == (21, 3)
    assert np.allclose(data[:, 1], (1 - data[:, 0] ** 2) / 2, atol=1e-12)
