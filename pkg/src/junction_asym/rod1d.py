"""One-dimensional rod limit problems.

All profiles share the form

    U(z) = P(z) + k (l - z) + A0 * c (1 - z/l)

with P the particular solution of -gamma U'' = f, U'(0) = 0, U(l) = 0.
P is stored as a Chebyshev interpolant of f integrated twice in closed
form, so evaluation carries no grid error beyond the interpolation of f.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev

CHEB_DEGREE = 64

CONVENTIONS = ("corrected", "as_printed")


class UnknownConstant(ValueError):
    """Raised when a profile with an undetermined additive constant is evaluated."""


def _particular(l: float, gamma: float, f) -> Chebyshev | None:
    if f is None:
        return None
    if np.isscalar(f):
        if f == 0:
            return None
        fc = Chebyshev([float(f)], domain=[0.0, l])
    else:
        fc = Chebyshev.interpolate(lambda z: np.asarray(f(z), dtype=float) * np.ones_like(z),
                                   CHEB_DEGREE, domain=[0.0, l])
    F = fc.integ(lbnd=0.0)              # F(s) = int_0^s f
    return -F.integ(lbnd=l) / gamma     # P(z) = gamma^-1 int_z^l F


@dataclass(frozen=True)
class RodProfile:
    l: float
    gamma: float
    regime: str  # alpha1_neumann_end | alpha0 | dirichlet_end
    particular: Chebyshev | None = None
    k: float = 0.0
    a0_coeff: float = 0.0   # coefficient of the unknown constant A0 in front of (1 - z/l)
    A0: float | None = None

    def _check(self, A0):
        if self.a0_coeff != 0.0 and A0 is None:
            raise UnknownConstant("profile depends on the undetermined constant A0; supply a value")

    def value(self, z, A0: float | None = None) -> np.ndarray:
        A0 = self.A0 if A0 is None else A0
        self._check(A0)
        z = np.asarray(z, dtype=float)
        out = self.k * (self.l - z)
        if self.particular is not None:
            out = out + self.particular(z)
        if self.a0_coeff != 0.0:
            out = out + A0 * self.a0_coeff * (1 - z / self.l)
        return out

    __call__ = value

    def derivative(self, z, A0: float | None = None) -> np.ndarray:
        A0 = self.A0 if A0 is None else A0
        self._check(A0)
        z = np.asarray(z, dtype=float)
        out = np.full(z.shape, -self.k)
        if self.particular is not None:
            out = out + self.particular.deriv()(z)
        if self.a0_coeff != 0.0:
            out = out - A0 * self.a0_coeff / self.l
        return out

    def second_derivative(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.particular is None:
            return np.zeros(z.shape)
        return self.particular.deriv(2)(z)

    def end_flux(self, area: float, A0: float | None = None) -> float:
        """-gamma |omega| U'(0)."""
        return float(-self.gamma * area * self.derivative(0.0, A0))

    def with_A0(self, A0: float) -> "RodProfile":
        return RodProfile(self.l, self.gamma, self.regime, self.particular, self.k, self.a0_coeff, A0)

    def h1_norm(self, n_panels: int = 64, A0: float | None = None) -> float:
        x, w = gauss_panels(0.0, self.l, n_panels)
        return float(np.sqrt(np.sum(w * (self.value(x, A0) ** 2 + self.derivative(x, A0) ** 2))))

    def to_csv(self, path: str | Path, n: int = 201, A0: float | None = None) -> None:
        z = np.linspace(0.0, self.l, n)
        u, du = self.value(z, A0), self.derivative(z, A0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "U", "dU"])
            for row in zip(z, u, du):
                w.writerow([f"{v:.14g}" for v in row])


def gauss_panels(a: float, b: float, n_panels: int = 64, order: int = 8):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    return (mid + half * xg).ravel(), (half * wg).ravel()


def solve_hash(l: float, gamma: float, f: Callable | float | None) -> RodProfile:
    """Rod profile with zero end flux at z = 0 and zero value at z = l."""
    return RodProfile(l, gamma, "alpha1_neumann_end", _particular(l, gamma, f))


def assemble_U0_alpha1(U_hash: RodProfile, A: float, area: float,
                       convention: str = "corrected") -> RodProfile:
    """Add the linear part carrying the junction coefficient A.

    corrected:  U = U# - A (l - z)/(gamma |omega|), so -gamma|omega| U'(0) = -A
    as_printed: U = U# + A (l - z)/(gamma |omega|), so -gamma|omega| U'(0) =  A
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    s = -1.0 if convention == "corrected" else 1.0
    return RodProfile(U_hash.l, U_hash.gamma, "alpha1_neumann_end", U_hash.particular,
                      U_hash.k + s * A / (U_hash.gamma * area))


def solve_dirichlet_ends(l: float, gamma: float, f, left_value: float) -> RodProfile:
    P = _particular(l, gamma, f)
    p0 = float(P(0.0)) if P is not None else 0.0
    return RodProfile(l, gamma, "dirichlet_end", P, (left_value - p0) / l)


def assemble_U0_alpha0(A0: float | None, a0: float, gamma: float, area: float, l: float,
                       ln_h: float, U_hash_dirichlet: RodProfile) -> RodProfile:
    """(A0 + a0 gamma |omega| ln h/(2 pi l)) (1 - z/l) + U#(z); A0 may stay unknown."""
    lin = a0 * gamma * area * ln_h / (2 * np.pi * l)
    return RodProfile(l, gamma, "alpha0", U_hash_dirichlet.particular,
                      U_hash_dirichlet.k + lin / l, 1.0, A0)
