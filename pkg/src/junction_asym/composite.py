"""Composite asymptotic fields on the physical junction and their error norms.

Fields are evaluated at physical points x = (y1, y2, z). The plate part lives
on the perforated plate, each rod part on its rod including the socket.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from . import fem
from .cross_section import UnsupportedSection
from .cutoffs import anchor_cutoff, rod_cutoff
from .geometry import JunctionConfig
from .matching import MatchingCoefficients
from .mesh import TriMesh
from .poisson2d import FeField, GreenData, solve_dirichlet, solve_neumann_mean_zero
from .reference_axisym import ReferenceSolution
from .rod1d import RodProfile, assemble_U0_alpha1, solve_dirichlet_ends

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass
class PlateData:
    """Plate-side ingredients computed on one 2D mesh."""
    mesh: TriMesh
    green: GreenData
    regular: FeField          # mean-zero part (Neumann) or Dirichlet solution
    regular_at_P: np.ndarray
    integral_f0: float
    lateral_bc: str


def prepare_plate(cfg: JunctionConfig, mesh: TriMesh, f0) -> PlateData:
    from .poisson2d import green_functions, value_at_anchor
    P = cfg.plate.anchor_array
    if cfg.plate.lateral_bc == "dirichlet":
        green = green_functions(mesh, P, "dirichlet", R0=cfg.plate.R0)
        reg = solve_dirichlet(mesh, f0)
        at_P = reg(P)
    else:
        green = green_functions(mesh, P, "neumann_mean_zero", R0=cfg.plate.R0)
        res = solve_neumann_mean_zero(mesh, f0)
        reg = res.field
        at_P = value_at_anchor(green, f0, reg).by_interpolation
    total = float(fem.load_vector(mesh.vertices, mesh.triangles, f0, False).sum())
    return PlateData(mesh, green, reg, np.atleast_1d(at_P), total, cfg.plate.lateral_bc)


@dataclass
class AsymptoticSolution:
    regime: str
    h: float
    plate_value: Evaluator
    plate_grad: Evaluator
    rod_values: list
    rod_grads: list
    coefficients: MatchingCoefficients | None = None
    rods: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _zero(x):
    return np.zeros(len(np.atleast_2d(x)))


def _zero_grad(x):
    return np.zeros((len(np.atleast_2d(x)), 3))


def _layer_terms(cfg: JunctionConfig, potentials, weights, h: float):
    """sum_j chi_0j * weight_j * Wtilde_j((y - P_j)/h), value and gradient (polygons only)."""
    P = cfg.plate.anchor_array
    chi = anchor_cutoff(cfg.plate.R0)
    active = [(j, pot) for j, pot in enumerate(potentials)
              if pot is not None and pot.kind != "analytic_disk" and weights[j] != 0.0]

    def value(x):
        y = np.atleast_2d(x)[:, :2]
        out = np.zeros(len(y))
        for j, pot in active:
            d = y - P[j]
            r = np.linalg.norm(d, axis=1)
            sel = r < cfg.plate.R0
            if np.any(sel):
                out[sel] += weights[j] * chi(r[sel]) * pot.remainder(d[sel] / h)
        return out

    def grad(x):
        y = np.atleast_2d(x)[:, :2]
        out = np.zeros((len(y), 3))
        for j, pot in active:
            d = y - P[j]
            r = np.linalg.norm(d, axis=1)
            sel = r < cfg.plate.R0
            if not np.any(sel):
                continue
            eta = d[sel] / h
            rho2 = np.sum(eta * eta, axis=1)
            grem = (pot.gradient(eta) + eta / (2 * np.pi * rho2[:, None])) / h
            rem = pot.remainder(eta)
            rs = np.maximum(r[sel], 1e-300)
            dchi = (chi.d1(rs) / rs)[:, None] * d[sel]
            out[sel, :2] += weights[j] * (chi(rs)[:, None] * grem + rem[:, None] * dchi)
        return out

    return value, grad


def _plate_singular_sum(plate: PlateData, coeffs: MatchingCoefficients, const: float):
    g = plate.green

    def value(x):
        y = np.atleast_2d(x)[:, :2]
        out = plate.regular.extrapolated(y) + const
        for j, A in enumerate(coeffs.A):
            out = out + A * g.value(j, y, extrapolate=True)
        return out

    def grad(x):
        y = np.atleast_2d(x)[:, :2]
        out = np.zeros((len(y), 3))
        out[:, :2] = plate.regular.gradient(y, extrapolate=True)
        for j, A in enumerate(coeffs.A):
            out[:, :2] += A * g.gradient(j, y, extrapolate=True)
        return out

    return value, grad


def _rod_evaluators(profile: RodProfile):
    def value(x):
        return profile.value(np.atleast_2d(x)[:, 2])

    def grad(x):
        z = np.atleast_2d(x)[:, 2]
        out = np.zeros((len(z), 3))
        out[:, 2] = profile.derivative(z)
        return out

    return value, grad


def _sum(f, g):
    return lambda x: f(x) + g(x)


def _check_J(cfg, *seqs):
    for s in seqs:
        if s is not None and len(s) != cfg.J:
            raise ValueError("ingredient count does not match the number of rods")


def build_alpha1(cfg: JunctionConfig, coeffs: MatchingCoefficients, plate: PlateData,
                 rods_hash: list, potentials: list, convention: str = "corrected") -> AsymptoticSolution:
    """Plate: regular part + A0 + sum A_j G_j + cut-off layer terms; rods: U_j^0."""
    _check_J(cfg, coeffs.A, rods_hash, potentials)
    const = 0.0 if coeffs.A0 is None else coeffs.A0
    pv, pg = _plate_singular_sum(plate, coeffs, const)
    lv, lg = _layer_terms(cfg, potentials, coeffs.A, cfg.h)
    rods = [assemble_U0_alpha1(U, A, sec.area(), convention)
            for U, A, sec in zip(rods_hash, coeffs.A, cfg.rods)]
    ev = [_rod_evaluators(r) for r in rods]
    return AsymptoticSolution(coeffs.regime, cfg.h, _sum(pv, lv), _sum(pg, lg),
                              [e[0] for e in ev], [e[1] for e in ev], coeffs, rods)


def build_alpha0(cfg: JunctionConfig, coeffs: MatchingCoefficients,
                 layers: list) -> AsymptoticSolution:
    """Plate: a0/h + sum chi_0j wtilde_j; rods: a0 (1 - z/l)/h + chi_j wtilde_j."""
    _check_J(cfg, layers)
    for sec, lay in zip(cfg.rods, layers):
        if not sec.is_disk or lay is None or lay.field is None:
            raise UnsupportedSection("the alpha = 0 layer term needs disk sections with a junction field")
    h, a0 = cfg.h, coeffs.a0
    P = cfg.plate.anchor_array
    chi0 = anchor_cutoff(cfg.plate.R0)
    factors = [-a0 * sec.gamma * sec.area() / sec.length for sec in cfg.rods]

    def local(x, j):
        x = np.atleast_2d(x)
        d = x[:, :2] - P[j]
        r = np.linalg.norm(d, axis=1)
        return d, r, x[:, 2] / h

    def plate_value(x):
        out = np.full(len(np.atleast_2d(x)), a0 / h)
        for j, lay in enumerate(layers):
            d, r, zeta = local(x, j)
            sel = r < cfg.plate.R0
            if np.any(sel):
                out[sel] += factors[j] * chi0(r[sel]) * lay.field.decaying_part(r[sel] / h, zeta[sel])
        return out

    def plate_grad(x):
        out = np.zeros((len(np.atleast_2d(x)), 3))
        for j, lay in enumerate(layers):
            d, r, zeta = local(x, j)
            sel = r < cfg.plate.R0
            if not np.any(sel):
                continue
            rs = np.maximum(r[sel], 1e-300)
            e = d[sel] / rs[:, None]
            w = lay.field.decaying_part(rs / h, zeta[sel])
            gw = lay.field.decaying_gradient(rs / h, zeta[sel]) / h
            c = chi0(rs)
            out[sel, :2] += factors[j] * ((c * gw[:, 0] + chi0.d1(rs) * w)[:, None] * e)
            out[sel, 2] += factors[j] * c * gw[:, 1]
        return out

    rod_values, rod_grads = [], []
    for j, (sec, lay) in enumerate(zip(cfg.rods, layers)):
        chi = rod_cutoff(sec.length)
        l, fj = sec.length, factors[j]

        def rv(x, j=j, lay=lay, chi=chi, l=l, fj=fj):
            d, r, zeta = local(x, j)
            z = zeta * h
            # inside the rod, rho <= a, so the cylinder branch of the layer field applies
            rho = np.minimum(r / h, lay.field.a)
            return a0 * (1 - z / l) / h + fj * chi(z) * lay.field.decaying_part(rho, zeta)

        def rg(x, j=j, lay=lay, chi=chi, l=l, fj=fj):
            d, r, zeta = local(x, j)
            z = zeta * h
            rho = np.minimum(r / h, lay.field.a)
            rs = np.maximum(r, 1e-300)
            w = lay.field.decaying_part(rho, zeta)
            gw = lay.field.decaying_gradient(rho, zeta) / h
            out = np.zeros((len(z), 3))
            out[:, :2] = (fj * chi(z) * gw[:, 0] / rs)[:, None] * d
            out[:, 2] = -a0 / (h * l) + fj * (chi.d1(z) * w + chi(z) * gw[:, 1])
            return out

        rod_values.append(rv)
        rod_grads.append(rg)
    rods = [RodProfile(sec.length, sec.gamma, "alpha0", None, a0 / h) for sec in cfg.rods]
    return AsymptoticSolution("alpha0", h, plate_value, plate_grad, rod_values, rod_grads,
                              coeffs, rods, list(coeffs.notes))


def build_dirichlet_variant(cfg: JunctionConfig, plate: PlateData, f_rods: list,
                            coeffs: MatchingCoefficients | None = None, rods_hash: list | None = None,
                            potentials: list | None = None,
                            convention: str = "corrected") -> AsymptoticSolution:
    """Plate with a Dirichlet lateral side.

    alpha = 1: Dirichlet plate solution + sum A_j G_j (+ layer terms), rods U_j^0.
    alpha = 0: plate solution U_0^# only, rods with Dirichlet data U_0^#(P_j) at z = 0.
    """
    if plate.lateral_bc != "dirichlet":
        raise ValueError("plate data must come from the Dirichlet lateral variant")
    if cfg.alpha == 1:
        if coeffs is None or rods_hash is None:
            raise ValueError("alpha = 1 needs matching coefficients and rod profiles")
        sol = build_alpha1(cfg, coeffs, plate, rods_hash, potentials or [None] * cfg.J, convention)
        sol.regime = "alpha1_dirichlet_lateral"
        return sol
    _check_J(cfg, f_rods)
    pv = lambda x: plate.regular.extrapolated(np.atleast_2d(x)[:, :2])

    def pg(x):
        y = np.atleast_2d(x)[:, :2]
        out = np.zeros((len(y), 3))
        out[:, :2] = plate.regular.gradient(y, extrapolate=True)
        return out

    rods = [solve_dirichlet_ends(sec.length, sec.gamma, f, float(v))
            for sec, f, v in zip(cfg.rods, f_rods, plate.regular_at_P)]
    ev = [_rod_evaluators(r) for r in rods]
    return AsymptoticSolution("alpha0_dirichlet_lateral", cfg.h, pv, pg,
                              [e[0] for e in ev], [e[1] for e in ev], None, rods)


# ---------------------------------------------------------------- error norms

@dataclass
class ErrorReport:
    h: float
    plate_H1_seminorm_err: float
    plate_weighted_L2_err: float
    plate_weighted_L2_err_logscaled: float  # times (1 + |ln h|)^-1
    plate_combined_err: float               # seminorm + log-scaled weighted norm
    rod_H1_err: float
    rod_H1_seminorm_err: float
    rod_H1_err_scaled: float                # h^-1/2 * rod_H1_err for alpha = 1, rod_H1_err otherwise
    rod_weighted_err: float                 # weight (l - z)^-1
    rod_combined_err: float                 # rod seminorm + weighted norm
    norm_of_reference: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class _Quad:
    x3: np.ndarray       # physical points (N, 3)
    w: np.ndarray        # volume weights with 2 pi r
    u: np.ndarray        # reference values
    g: np.ndarray        # reference gradients (N, 3)
    r: np.ndarray
    z: np.ndarray
    plate: np.ndarray    # mask of perforated plate points
    rod: np.ndarray


def reference_quadrature(ref: ReferenceSolution, anchor=(0.0, 0.0)) -> _Quad:
    """7-point rule on the (r, z) mesh; physical points placed on the ray y2 = P2."""
    m = ref.mesh
    xq, wq = fem.quad_points(m.vertices, m.triangles)
    _, grads = fem.triangle_geometry(m.vertices, m.triangles)
    vals = np.einsum("qk,mk->mq", fem.QUAD7_BARY, ref.values[m.triangles])
    gel = np.einsum("mk,mkd->md", ref.values[m.triangles], grads)
    nq = xq.shape[1]
    r = xq[..., 0].ravel()
    z = xq[..., 1].ravel()
    w = (wq * 2 * np.pi * xq[..., 0]).ravel()
    g = np.zeros((len(r), 3))
    g[:, 0] = np.repeat(gel[:, 0], nq)
    g[:, 2] = np.repeat(gel[:, 1], nq)
    x3 = np.stack([anchor[0] + r, np.full_like(r, anchor[1]), z], axis=1)
    plate = np.repeat(m.region == 0, nq)
    return _Quad(x3, w, vals.ravel(), g, r, z, plate, ~plate)


def plate_weight(r: np.ndarray) -> np.ndarray:
    """r^-1 (1 + |ln r|)^-1 with r = min(1, distance to the nearest anchor)."""
    rr = np.minimum(1.0, r)
    return 1.0 / (rr * (1.0 + np.abs(np.log(rr))))


def error_norms(asym: AsymptoticSolution, ref: ReferenceSolution, anchor=(0.0, 0.0),
                quad: _Quad | None = None) -> ErrorReport:
    """Norms of (reference - asymptotic) on the reference mesh (single centred rod)."""
    if len(asym.rod_values) != 1:
        raise ValueError("the axisymmetric reference carries exactly one rod")
    q = quad or reference_quadrature(ref, anchor)
    h = ref.h
    l = ref.domain.rod_length
    ea = np.zeros_like(q.u)
    ga = np.zeros_like(q.g)
    p, rmask = q.plate, q.rod
    ea[p] = asym.plate_value(q.x3[p])
    ga[p] = asym.plate_grad(q.x3[p])
    ea[rmask] = asym.rod_values[0](q.x3[rmask])
    ga[rmask] = asym.rod_grads[0](q.x3[rmask])
    e = q.u - ea
    ge = q.g - ga
    w = q.w
    ge2 = np.sum(ge * ge, axis=1)
    plate_semi = np.sqrt(np.sum(w[p] * ge2[p]))
    plate_wl2 = np.sqrt(np.sum(w[p] * (plate_weight(q.r[p]) * e[p]) ** 2))
    logf = 1.0 / (1.0 + abs(np.log(h)))
    rod_l2 = np.sum(w[rmask] * e[rmask] ** 2)
    rod_semi = np.sqrt(np.sum(w[rmask] * ge2[rmask]))
    rod_h1 = np.sqrt(rod_l2 + rod_semi**2)
    scaled = rod_h1 / np.sqrt(h) if ref.alpha == 1 else rod_h1
    rod_w = np.sqrt(np.sum(w[rmask] * (e[rmask] / np.maximum(l - q.z[rmask], 1e-300)) ** 2))
    ref_norm = np.sqrt(np.sum(w * (q.u**2 + np.sum(q.g**2, axis=1))))
    return ErrorReport(h, float(plate_semi), float(plate_wl2), float(plate_wl2 * logf),
                       float(plate_semi + plate_wl2 * logf), float(rod_h1), float(rod_semi),
                       float(scaled), float(rod_w), float(rod_semi + rod_w), float(ref_norm))


# ---------------------------------------------------------------- limit metrics

def rescaled_plate_h1(ref: ReferenceSolution, target: float, scale: float = 1.0,
                      quad: _Quad | None = None) -> float:
    """H1(omega_0 x (0,1)) norm of scale*u - target in (y, zeta = z/h), socket included."""
    q = quad or reference_quadrature(ref)
    h = ref.h
    sel = q.z < h
    v = scale * q.u[sel] - target
    g = scale * q.g[sel]
    dens = v**2 + g[:, 0] ** 2 + g[:, 1] ** 2 + (h * g[:, 2]) ** 2
    return float(np.sqrt(np.sum(q.w[sel] * dens) / h))


def rescaled_rod_h1(ref: ReferenceSolution, profile: Callable, dprofile: Callable, scale: float = 1.0,
                    quad: _Quad | None = None) -> float:
    """H1(omega x (0,l)) norm of scale*u - profile(z) in (eta = (y - P)/h, z)."""
    q = quad or reference_quadrature(ref)
    h = ref.h
    sel = q.rod
    z = q.z[sel]
    v = scale * q.u[sel] - profile(z)
    g = scale * q.g[sel]
    dens = v**2 + h**2 * (g[:, 0] ** 2 + g[:, 1] ** 2) + (g[:, 2] - dprofile(z)) ** 2
    return float(np.sqrt(np.sum(q.w[sel] * dens) / h**2))


def plate_average(ref: ReferenceSolution, quad: _Quad | None = None) -> float:
    """Mean of u over the rescaled plate omega_0 x (0,1), socket included."""
    q = quad or reference_quadrature(ref)
    sel = q.z < ref.h
    return float(np.sum(q.w[sel] * q.u[sel]) / np.sum(q.w[sel]))


def hardy_sides(W: Callable, dW: Callable, L: float, n_panels: int = 64) -> tuple[float, float]:
    """Both sides of int_0^L z^-2 W^2 dz <= 4 int_0^L |W'|^2 dz."""
    from .rod1d import gauss_panels
    z, w = gauss_panels(0.0, L, n_panels)
    return float(np.sum(w * W(z) ** 2 / z**2)), float(4 * np.sum(w * dW(z) ** 2))
