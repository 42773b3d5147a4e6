"""Matching algebra for the junction coefficients.

Sign conventions: ``corrected`` (default) uses the rod-end flux relation that
balances the plate constraint sum(A) = -<f0>; ``as_printed`` keeps the
opposite sign in the diagonal rod term, for comparison only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rod1d import CONVENTIONS


class NotPositiveDefinite(np.linalg.LinAlgError):
    def __init__(self, msg: str, h0: float):
        super().__init__(msg)
        self.h0 = h0


@dataclass(frozen=True)
class MatchingInputs:
    G: np.ndarray               # regular parts of the Green functions at the anchors
    c_log: np.ndarray
    gamma: np.ndarray
    area: np.ndarray            # cross-section areas
    l: np.ndarray
    U_hash_at_0: np.ndarray     # rod profiles with zero end flux, at z = 0
    U_plate_at_P: np.ndarray    # regular plate part at the anchors (mean-zero part or Dirichlet solution)
    mean_f0: float              # integral of the plate source
    ln_h: float
    q: np.ndarray | None = None  # junction constants (alpha = 0 only)
    convention: str = "corrected"

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        J = G.shape[0]
        object.__setattr__(self, "G", G)
        for name in ("c_log", "gamma", "area", "l", "U_hash_at_0", "U_plate_at_P"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (J,)).copy()
            object.__setattr__(self, name, v)
        if self.q is not None:
            object.__setattr__(self, "q", np.broadcast_to(np.asarray(self.q, float), (J,)).copy())
        if G.shape != (J, J):
            raise ValueError("Green matrix must be square")
        if np.max(np.abs(G - G.T), initial=0.0) > 1e-3 * max(1.0, np.max(np.abs(G))):
            raise ValueError("Green matrix is not symmetric within tolerance")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")

    @property
    def J(self) -> int:
        return self.G.shape[0]

    @property
    def F(self) -> np.ndarray:
        return self.U_hash_at_0 - self.U_plate_at_P

    def with_ln_h(self, ln_h: float) -> "MatchingInputs":
        return MatchingInputs(self.G, self.c_log, self.gamma, self.area, self.l, self.U_hash_at_0,
                              self.U_plate_at_P, self.mean_f0, ln_h, self.q, self.convention)


@dataclass
class MatchingCoefficients:
    regime: str
    A: np.ndarray
    A0: float | None = None
    A0_known: bool = True
    m: float | None = None
    a0: float | None = None
    b: np.ndarray | None = None
    rod_left_value: np.ndarray | None = None  # alpha = 0 Dirichlet datum of the rod profile
    expansion: dict = field(default_factory=dict)
    h0: float | None = None
    M: np.ndarray | None = None
    notes: list = field(default_factory=list)


def offset_matrix(inp: MatchingInputs) -> np.ndarray:
    """M(ln h) + (2 pi)^-1 ln h I, the part of M independent of h."""
    rod = inp.l / (inp.gamma * inp.area)
    s = 1.0 if inp.convention == "corrected" else -1.0
    B = 0.5 * (inp.G + inp.G.T) - np.diag(np.log(inp.c_log) / (2 * np.pi) - s * rod)
    return B


def critical_h(inp: MatchingInputs) -> float:
    """Largest h0 <= 1 such that M(ln h) is positive definite for all h < h0."""
    lam = np.linalg.eigvalsh(offset_matrix(inp)).min()
    return float(min(1.0, np.exp(2 * np.pi * lam)))


def assemble_M(inp: MatchingInputs) -> np.ndarray:
    if inp.ln_h >= 0:
        raise ValueError("ln h must be negative")
    M = -inp.ln_h / (2 * np.pi) * np.eye(inp.J) + offset_matrix(inp)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        h0 = critical_h(inp)
        raise NotPositiveDefinite(
            f"matching matrix not positive definite at h = {np.exp(inp.ln_h):.4g}; need h < {h0:.4g}", h0)
    return M


def expansion_alpha1(inp: MatchingInputs) -> dict:
    """Leading terms of A0 and A_j in powers of |ln h|^-1."""
    J = inp.J
    E = np.ones(J)
    B = offset_matrix(inp)
    f = inp.mean_f0
    return {
        "A0_m1": f / (2 * np.pi * J),
        "A0_0": (E @ inp.F + f * (E @ B @ E) / J) / J,
        "A_0": np.full(J, -f / J),
    }


def solve_alpha1(inp: MatchingInputs) -> MatchingCoefficients:
    M = assemble_M(inp)
    E = np.ones(inp.J)
    Minv_E = np.linalg.solve(M, E)
    Minv_F = np.linalg.solve(M, inp.F)
    m = float(E @ Minv_E)
    A0 = (inp.mean_f0 + E @ Minv_F) / m
    A = -A0 * Minv_E + Minv_F
    return MatchingCoefficients("alpha1", A, float(A0), True, m, expansion=expansion_alpha1(inp),
                                h0=critical_h(inp), M=M)


def solve_alpha1_dirichlet_lateral(inp: MatchingInputs) -> MatchingCoefficients:
    """inp.G holds Dirichlet Green data and inp.U_plate_at_P the Dirichlet plate solution."""
    M = assemble_M(inp)
    A = np.linalg.solve(M, inp.F)
    return MatchingCoefficients("alpha1_dirichlet_lateral", A, None, True, None,
                                h0=critical_h(inp), M=M,
                                notes=["no constant term in the plate part"])


def solve_alpha0(inp: MatchingInputs, A0: float | None = None) -> MatchingCoefficients:
    w = inp.area * inp.gamma / inp.l
    if w.sum() <= 0:
        raise ValueError("sum of rod conductances must be positive")
    a0 = inp.mean_f0 / w.sum()
    A = -a0 * w
    notes = []
    known = A0 is not None
    if not known:
        notes.append("A0 is undetermined at this order; evaluated as 0")
    A0v = 0.0 if A0 is None else float(A0)
    GA = inp.G.T @ A  # sum_k A_k G_kj
    lnh_term = a0 * w * inp.ln_h / (2 * np.pi)
    b = inp.U_plate_at_P + A0v + GA + lnh_term
    left = None
    if inp.q is not None:
        if inp.convention == "corrected":
            left = inp.U_plate_at_P + GA - a0 * w * inp.q
        else:
            left = inp.U_plate_at_P + GA + a0 * inp.gamma * inp.area * inp.q
    return MatchingCoefficients("alpha0", A, A0v, known, None, a0, b, left, notes=notes)
