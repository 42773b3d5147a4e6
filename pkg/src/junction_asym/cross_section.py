"""Per-rod cross-section quantities.

* the exterior logarithmic potential vanishing on the section boundary and
  its logarithmic capacity (closed form for disks, single-layer boundary
  integral solve for polygons);
* the growth constant of a semi-cylinder field driven by lateral flux data;
* the junction constant of the layer + semi-cylinder problem, from a
  truncated axisymmetric solve (disks only).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fem
from .cutoffs import RadialCutoff
from .geometry import CrossSection, Shape
from .reference_axisym import AxisymDomain, ReferenceSolution, build_mesh, solve_axisym

BESSEL_JP11 = 1.8411837813406593  # first positive zero of J1'


class UnsupportedSection(ValueError):
    pass


# ---------------------------------------------------------------- log potential

def _segment_log_integrals(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """int over segment [a_k, b_k] of ln|x_i - y| ds_y, shape (len(x), len(a))."""
    e = b - a
    L = np.linalg.norm(e, axis=1)
    t = e / L[:, None]
    rel = x[:, None, :] - a[None, :, :]
    s = np.einsum("nkd,kd->nk", rel, t)
    d = np.abs(rel[..., 0] * t[None, :, 1] - rel[..., 1] * t[None, :, 0])

    def F(u):
        with np.errstate(divide="ignore", invalid="ignore"):
            q = u * u + d * d
            val = np.where(q > 0, u * np.log(np.where(q > 0, q, 1.0)), 0.0) - 2 * u
            val = val + np.where(d > 1e-300, 2 * d * np.arctan(u / np.where(d > 1e-300, d, 1.0)), 0.0)
        return val

    return 0.5 * (F(L[None, :] - s) - F(-s))


def _graded_panels(vertices: np.ndarray, per_edge: int, levels: int):
    """Panel end points on each polygon edge, refined geometrically toward the corners."""
    starts, ends = [], []
    for i in range(len(vertices)):
        p, q = vertices[i], vertices[(i + 1) % len(vertices)]
        inner = np.linspace(0.5 ** levels, 1 - 0.5 ** levels, per_edge + 1)
        near0 = 0.5 ** np.arange(levels, 0, -1)  # 2^-levels ... 1/2
        t = np.unique(np.concatenate([[0.0], near0[near0 < inner[0]], inner,
                                      1 - near0[::-1][1 - near0[::-1] > inner[-1]], [1.0]]))
        pts = p + t[:, None] * (q - p)
        starts.append(pts[:-1])
        ends.append(pts[1:])
    return np.concatenate(starts), np.concatenate(ends)


@dataclass
class LogPotential:
    section: Shape
    c_log: float
    kind: str  # "analytic_disk" or "numeric"
    density: np.ndarray | None = None  # per panel, equals d W / d nu (nu into the section)
    panel_a: np.ndarray | None = None
    panel_b: np.ndarray | None = None
    level: float = 0.0  # constant value of the layer potential on the boundary

    def __call__(self, eta) -> np.ndarray:
        p = np.atleast_2d(np.asarray(eta, dtype=float))
        if self.kind == "analytic_disk":
            rho = np.linalg.norm(p, axis=1)
            return np.log(self.section.radius / rho) / (2 * np.pi)
        I = _segment_log_integrals(p, self.panel_a, self.panel_b)
        return -(I @ self.density) / (2 * np.pi) - self.level

    def gradient(self, eta) -> np.ndarray:
        p = np.atleast_2d(np.asarray(eta, dtype=float))
        if self.kind == "analytic_disk":
            rho2 = np.sum(p * p, axis=1)
            return -p / (2 * np.pi * rho2[:, None])
        # Gauss quadrature on panels is accurate away from the boundary
        xg, wg = np.polynomial.legendre.leggauss(8)
        out = np.zeros_like(p)
        for xi, wi in zip(0.5 * (xg + 1), 0.5 * wg):
            y = self.panel_a + xi * (self.panel_b - self.panel_a)
            L = np.linalg.norm(self.panel_b - self.panel_a, axis=1)
            d = p[:, None, :] - y[None]
            r2 = np.sum(d * d, axis=2)
            out += -np.einsum("nk,nkd->nd", wi * L * self.density / r2, d) / (2 * np.pi)
        return out

    def remainder(self, eta) -> np.ndarray:
        """W + (2 pi)^-1 (ln rho - ln c_log): the decaying part of the potential."""
        p = np.atleast_2d(np.asarray(eta, dtype=float))
        rho = np.linalg.norm(p, axis=1)
        if self.kind == "analytic_disk":
            return np.zeros(len(p))
        return self(p) + (np.log(rho) - np.log(self.c_log)) / (2 * np.pi)


def log_potential(section: Shape, per_edge: int = 40, levels: int = 14) -> LogPotential:
    if section.is_disk:
        return LogPotential(section, float(section.radius), "analytic_disk")
    v = np.asarray(section.vertices, dtype=float)
    a, b = _graded_panels(v, per_edge, levels)
    mid = 0.5 * (a + b)
    L = np.linalg.norm(b - a, axis=1)
    S = -_segment_log_integrals(mid, a, b) / (2 * np.pi)
    n = len(a)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = S
    A[:n, n] = -1.0
    A[n, :n] = L
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise UnsupportedSection("ill-conditioned layer system (near-degenerate polygon)")
    sol = np.linalg.solve(A, rhs)
    sigma, V = sol[:n], sol[n]
    return LogPotential(section, float(np.exp(-2 * np.pi * V)), "numeric", sigma, a, b, float(V))


def flux_identity_check(pot: LogPotential, n_theta: int = 2048) -> float:
    """Total flux of the potential into the section, which must equal 1.

    Disks use the closed form. For polygons the flux is measured on a circle
    of twice the circumradius (trapezoid rule, spectrally accurate), which by
    the divergence theorem equals the flux through the section boundary.
    """
    if pot.kind == "analytic_disk":
        a = pot.section.radius
        return float((1.0 / (2 * np.pi * a)) * 2 * np.pi * a)
    R = 2.0 * pot.section.circumradius()
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    e = np.stack([np.cos(th), np.sin(th)], axis=1)
    g = pot.gradient(R * e)
    # inward radial derivative on the circle times arc length
    return float(-np.sum(np.einsum("nd,nd->n", g, e)) * R * 2 * np.pi / n_theta)


def boundary_normal_flux(pot: LogPotential, n: int = 512):
    """Quadrature of the boundary: points, weights and d W/d nu (nu into the section)."""
    if pot.kind == "analytic_disk":
        a = pot.section.radius
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        pts = a * np.stack([np.cos(th), np.sin(th)], axis=1)
        return pts, np.full(n, 2 * np.pi * a / n), np.full(n, 1.0 / (2 * np.pi * a))
    L = np.linalg.norm(pot.panel_b - pot.panel_a, axis=1)
    return 0.5 * (pot.panel_a + pot.panel_b), L, pot.density


# ---------------------------------------------------------------- semi-cylinder growth

@dataclass(frozen=True)
class GrowthConstants:
    C: float
    C0: float = 0.0  # normalisation: the additive constant is fixed to zero


def semicylinder_growth(section: CrossSection, flux_data: Callable, support: float,
                        pot: LogPotential | None = None, n_zeta: int = 64) -> GrowthConstants:
    """Linear growth rate of the semi-cylinder field with lateral Neumann data g.

    flux_data(eta_points, zeta) -> g on the lateral surface; it must vanish
    for zeta > support. The rate is C = -(gamma |omega|)^-1 * int int g.
    """
    if not np.isfinite(support) or support <= 0:
        raise ValueError("flux data must have compact support in zeta")
    pot = pot or log_potential(section)
    pts, w, _ = boundary_normal_flux(pot)
    xg, wg = np.polynomial.legendre.leggauss(n_zeta)
    zeta = 0.5 * support * (xg + 1)
    wz = 0.5 * support * wg
    total = 0.0
    for zk, wk in zip(zeta, wz):
        total += wk * np.sum(w * np.asarray(flux_data(pts, np.full(len(pts), zk)), dtype=float))
    return GrowthConstants(-total / (section.gamma * section.area()), 0.0)


def layer_flux_data(pot: LogPotential, A: float) -> Callable:
    """g = A * dW/dnu on zeta in (0, 1), zero above."""
    if pot.kind == "analytic_disk":
        val = 1.0 / (2 * np.pi * pot.section.radius)

        def g(eta, zeta):
            return np.where(np.asarray(zeta) < 1.0, A * val, 0.0)
        return g
    mids = 0.5 * (pot.panel_a + pot.panel_b)
    from scipy.spatial import cKDTree
    tree = cKDTree(mids)

    def g(eta, zeta):
        _, k = tree.query(np.atleast_2d(eta))
        return np.where(np.asarray(zeta) < 1.0, A * pot.density[k], 0.0)
    return g


# ---------------------------------------------------------------- junction constant

@dataclass
class JunctionLayerField:
    """Truncated solve of the layer + semi-cylinder problem with unit far-field data.

    In stretched coordinates (rho, zeta): layer rho > a, 0 < zeta < 1 and
    semi-cylinder rho < a, zeta > 0. Behaviour: -(2 pi)^-1 ln rho in the layer
    far field, zeta/(gamma |omega|) + q in the semi-cylinder.
    """
    a: float
    gamma: float
    q: float
    R: float
    Z: float
    solution: ReferenceSolution

    @property
    def area(self) -> float:
        return np.pi * self.a**2

    def __call__(self, rho, zeta) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        return self.solution(np.stack([rho.ravel(), zeta.ravel()], axis=1)).reshape(rho.shape)

    def decaying_part(self, rho, zeta) -> np.ndarray:
        """Field minus its far-field form in each part; set to 0 beyond the truncation."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        out = np.zeros(np.broadcast(rho, zeta).shape)
        rho, zeta = np.broadcast_arrays(rho, zeta)
        in_rod = rho <= self.a
        lay = (~in_rod) & (rho < self.R)
        rod = in_rod & (zeta < self.Z)
        if np.any(lay):
            out[lay] = self(rho[lay], zeta[lay]) + np.log(rho[lay]) / (2 * np.pi)
        if np.any(rod):
            out[rod] = self(rho[rod], zeta[rod]) - zeta[rod] / (self.gamma * self.area) - self.q
        return out

    def decaying_gradient(self, rho, zeta, eps: float = 1e-6) -> np.ndarray:
        """(d/drho, d/dzeta) of decaying_part by P1 element gradients."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        loc = self.solution.locator()
        m = self.solution.mesh
        pts = np.stack([rho, zeta], axis=1)
        idx, _ = loc.locate(pts)
        _, grads = fem.triangle_geometry(m.vertices, m.triangles)
        ok = idx >= 0
        g = np.zeros((len(rho), 2))
        tri = m.triangles[idx[ok]]
        g[ok] = np.einsum("ni,nid->nd", self.solution.values[tri], grads[idx[ok]])
        in_rod = rho <= self.a
        lay = (~in_rod) & (rho < self.R)
        rod = in_rod & (zeta < self.Z)
        g[lay, 0] += 1.0 / (2 * np.pi * rho[lay])
        g[rod, 1] -= 1.0 / (self.gamma * self.area)
        g[~(lay | rod)] = 0.0
        return g


@dataclass
class BoundaryLayerData:
    q: float
    c_log: float
    delta: float
    truncation_report: dict = field(default_factory=dict)
    field: JunctionLayerField | None = None


def _tag_flux(sol: ReferenceSolution, tag: str) -> float:
    """Outward conormal flux through a Dirichlet boundary (discrete reaction)."""
    m = sol.mesh
    coef = np.where(m.region == 1, sol.domain.coef_rod, sol.domain.coef_plate)
    K = fem.stiffness(m.vertices, m.triangles, coef=coef, axisym=True)
    ids = np.unique(m.edges[tag])
    return float((K @ sol.values)[ids].sum())


def _solve_junction_field(a: float, gamma: float, R: float, Z: float, level: int) -> JunctionLayerField:
    """Cylinder end carries the linear profile; the layer end carries -ln R/(2 pi) + c.

    The unknown c is fixed by requiring unit flux through the cylinder end
    (superposition of two Dirichlet solves, equivalent to a one-row
    augmentation). Shifting by -c restores the zero layer constant, so the
    cylinder constant is q = -c.
    """
    dom = AxisymDomain(rod_radius=a, plate_radius=R, thickness=1.0, rod_length=Z,
                       coef_plate=1.0, coef_rod=gamma)
    mesh = build_mesh(dom, level, plate_cells=int(4 * R), rod_cells=int(4 * Z))
    area = np.pi * a * a
    u1 = solve_axisym(dom, mesh, dirichlet={"outer": -np.log(R) / (2 * np.pi),
                                            "rod_top": Z / (gamma * area)})
    u2 = solve_axisym(dom, mesh, dirichlet={"outer": 1.0, "rod_top": 0.0})
    f1, f2 = _tag_flux(u1, "rod_top"), _tag_flux(u2, "rod_top")
    c = (1.0 - f1) / f2
    u1.values = u1.values + c * u2.values - c
    u1.stats["outer_constant"] = c
    return JunctionLayerField(a, gamma, -c, R, Z, u1)


def junction_constant_q(section: CrossSection, gamma: float | None = None,
                        truncation: tuple = (16.0, 16.0), level: int = 2,
                        tolerance: float | None = None) -> BoundaryLayerData:
    """Constant q in the semi-cylinder asymptotics of the unit junction field."""
    if not section.is_disk:
        raise UnsupportedSection("junction constant needs the axisymmetric path (disk sections only)")
    g = section.gamma if gamma is None else gamma
    a = float(section.radius)
    R, Z = map(float, truncation)
    fine = _solve_junction_field(a, g, R, Z, level)
    coarse = _solve_junction_field(a, g, R / 2, Z / 2, level)
    indicator = abs(fine.q - coarse.q)
    report = {"R": R, "Z": Z, "q_half_truncation": coarse.q, "indicator": indicator,
              "mesh_level": level, "dofs": fine.solution.n_dof}
    if tolerance is not None and indicator > tolerance:
        raise RuntimeError(f"truncation indicator {indicator:.3g} above tolerance {tolerance:.3g}")
    return BoundaryLayerData(fine.q, a, BESSEL_JP11 / a, report, fine)


def compatibility_integrals(field: JunctionLayerField, R_j: float | None = None) -> tuple[float, float]:
    """Discrete values of the two commutator integrals whose sum must vanish.

    layer term: (2 pi)^-1 int_layer [Lap, X_L] ln(1/rho)
    cylinder term: |omega|^-1 int_cyl [Lap, X_Q] zeta
    with X_L = 1 - chi(rho / R_j), X_Q = 1 - chi(zeta), chi = 1 below 1, 0 above 2.
    Both are integrated with the 7-point rule on the truncated mesh.
    """
    a = field.a
    R_j = 2.0 * a if R_j is None else R_j
    if 2 * R_j > field.R or field.Z < 2:
        raise ValueError("truncated mesh does not cover the cut-off supports")
    chi = RadialCutoff(1.0, 2.0)
    m = field.solution.mesh
    xq, wq = fem.quad_points(m.vertices, m.triangles)
    wq = wq * 2 * np.pi * xq[..., 0]
    rho, zeta = xq[..., 0], xq[..., 1]
    # d/drho of X_L = -chi'(rho/R_j)/R_j, etc.
    t = rho / R_j
    Xp = -chi.d1(t) / R_j
    Xpp = -chi.d2(t) / R_j**2
    L = -np.log(np.maximum(rho, 1e-300))  # ln(1/rho)
    dL = -1.0 / np.maximum(rho, 1e-300)
    comm_layer = 2 * Xp * dL + L * (Xpp + Xp / np.maximum(rho, 1e-300))
    lay = np.broadcast_to((m.region == 0)[:, None], rho.shape)
    layer_term = float(np.sum(wq[lay] * comm_layer[lay]) / (2 * np.pi))
    XQp = -chi.d1(zeta)
    XQpp = -chi.d2(zeta)
    comm_cyl = 2 * XQp * 1.0 + zeta * XQpp
    rod = ~lay
    cyl_term = float(np.sum(wq[rod] * comm_cyl[rod]) / (np.pi * a * a))
    return layer_term, cyl_term
