"""Planar P1 Poisson solvers and generalized Green functions of the plate."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate

from . import fem
from .cutoffs import anchor_cutoff
from .mesh import TriMesh

SOLVER_RTOL = 1e-10
COMPAT_RTOL = 1e-8


class SolverError(RuntimeError):
    pass


def log_kernel(r):
    """Fundamental solution of -Laplace in the plane: (2 pi)^-1 ln(1/r)."""
    return -np.log(r) / (2.0 * np.pi)


def sparse_solve(A: sp.spmatrix, b: np.ndarray, symmetric_definite: bool = False) -> np.ndarray:
    """Sparse LU with iterative refinement; Krylov fallback at relative tolerance 1e-10.

    Acceptance uses the normwise backward error |Ax - b| / (|A| |x| + |b|),
    which stays meaningful for the badly scaled graded meshes.
    """
    A = sp.csc_matrix(A)
    bnorm = max(np.linalg.norm(b, np.inf), 1e-300)
    Anorm = spla.norm(A, np.inf)

    def backward_error(x):
        return np.linalg.norm(A @ x - b, np.inf) / (Anorm * np.linalg.norm(x, np.inf) + bnorm)

    try:
        lu = spla.splu(A)
        x = lu.solve(b)
        for _ in range(2):
            x = x + lu.solve(b - A @ x)
        if np.all(np.isfinite(x)) and backward_error(x) <= SOLVER_RTOL:
            return x
    except RuntimeError:
        pass
    method = spla.cg if symmetric_definite else spla.minres
    x, info = method(A, b, rtol=SOLVER_RTOL, maxiter=20 * A.shape[0])
    if info != 0 or backward_error(x) > 1e-8:
        raise SolverError("linear solve failed (singular system or broken mesh)")
    return x


@dataclass(frozen=True)
class FeField:
    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.mesh.n_vertices:
            raise ValueError("value count must equal vertex count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite entries")

    def __call__(self, points) -> np.ndarray:
        return evaluate(self, points)

    def mean(self) -> float:
        w = self.mesh.vertex_weights
        return float(w @ self.values / w.sum())

    def integral(self) -> float:
        return float(self.mesh.vertex_weights @ self.values)

    def extrapolated(self, points) -> np.ndarray:
        """Interpolation that extends the nearest element linearly outside the mesh."""
        return self.mesh.locator.interpolate(self.values, np.atleast_2d(points), extrapolate=True)

    def gradient(self, points, extrapolate: bool = False) -> np.ndarray:
        """Recovered (vertex-averaged) gradient, linearly interpolated."""
        g = self._recovered
        loc = self.mesh.locator
        p = np.atleast_2d(points)
        return np.stack([loc.interpolate(g[:, 0], p, extrapolate=extrapolate),
                         loc.interpolate(g[:, 1], p, extrapolate=extrapolate)], axis=1)

    @property
    def _recovered(self):
        cache = self.__dict__.get("_grad_cache")
        if cache is None:
            cache = fem.recovered_gradient(self.mesh.vertices, self.mesh.triangles, self.values)
            object.__setattr__(self, "_grad_cache", cache)
        return cache

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex", "x", "y", "value"])
            for i, ((x, y), v) in enumerate(zip(self.mesh.vertices, self.values)):
                w.writerow([i, f"{x:.12g}", f"{y:.12g}", f"{v:.12g}"])


def evaluate(field: FeField, points) -> np.ndarray | float:
    """Barycentric interpolation; raises for points outside the mesh."""
    p = np.asarray(points, dtype=float)
    scalar = p.ndim == 1
    vals = field.mesh.locator.interpolate(field.values, np.atleast_2d(p))
    if np.any(np.isnan(vals)):
        raise ValueError("point outside mesh")
    return float(vals[0]) if scalar else vals


def _stiffness(mesh: TriMesh) -> sp.csr_matrix:
    K = mesh.__dict__.get("_stiffness")
    if K is None:
        K = fem.stiffness(mesh.vertices, mesh.triangles)
        mesh.__dict__["_stiffness"] = K
    return K


@dataclass(frozen=True)
class NeumannResult:
    field: FeField
    subtracted_mean: float  # constant removed from the source to restore compatibility
    residual: float


def solve_neumann_mean_zero(mesh: TriMesh, source, flux=None) -> NeumannResult:
    """-Laplace u = f in the plate, du/dn = flux on the boundary, mesh-mean of u zero.

    An incompatible source is projected: its mean (total load / area) is
    subtracted and reported. The constraint is a single multiplier row.
    """
    pts, tris = mesh.vertices, mesh.triangles
    b = fem.load_vector(pts, tris, source)
    scale = np.abs(b).sum()
    if flux is not None:
        fb = fem.edge_load_vector(pts, mesh.boundary_edges, flux)
        b = b + fb
        scale += np.abs(fb).sum()
    w = mesh.vertex_weights
    area = w.sum()
    total = b.sum()
    mean = 0.0
    if abs(total) > COMPAT_RTOL * max(scale, 1e-300):
        mean = total / area
        b = b - mean * w
    K = _stiffness(mesh)
    n = mesh.n_vertices
    A = sp.bmat([[K, sp.csr_matrix(w[:, None])], [sp.csr_matrix(w[None, :]), None]], format="csc")
    x = sparse_solve(A, np.concatenate([b, [0.0]]))
    u = x[:n]
    u = u - (w @ u) / area
    res = np.linalg.norm(K @ u - b) / max(np.linalg.norm(b), 1e-300)
    return NeumannResult(FeField(mesh, u), float(mean), float(res))


def solve_dirichlet(mesh: TriMesh, source, boundary_value=0.0, tags=None) -> FeField:
    """-Laplace u = f with u prescribed on the (tagged) boundary vertices."""
    pts, tris = mesh.vertices, mesh.triangles
    K = _stiffness(mesh).tocsr()
    b = fem.load_vector(pts, tris, source)
    if tags is None:
        bnd = mesh.boundary_vertices()
    else:
        bnd = np.unique(np.concatenate([mesh.boundary_vertices(t) for t in tags]))
    u = np.zeros(mesh.n_vertices)
    u[bnd] = boundary_value(pts[bnd]) if callable(boundary_value) else boundary_value
    free = np.setdiff1d(np.arange(mesh.n_vertices), bnd)
    rhs = b[free] - K[free][:, bnd] @ u[bnd]
    u[free] = sparse_solve(K[free][:, free], rhs, symmetric_definite=True)
    return FeField(mesh, u)


# ---------------------------------------------------------------- Green functions

def _disk_integral_of_cutoff_log(R0: float) -> float:
    """int over the plane of chi(|y|) ln(1/|y|)/(2 pi) dy (chi supported in B_R0)."""
    chi = anchor_cutoff(R0)
    inner = integrate.quad(lambda r: log_kernel(r) * r, 0.0, 0.5 * R0)[0]
    outer = integrate.quad(lambda r: chi(r) * log_kernel(r) * r, 0.5 * R0, R0, epsabs=1e-14)[0]
    return 2 * np.pi * (inner + outer)


@dataclass(frozen=True)
class GreenData:
    """Green functions G_j = chi_j * logkernel(|y - P_j|) + g_j and the matrix G_jk."""

    regular_parts: tuple
    Gmatrix: np.ndarray
    bc_variant: str
    anchors: np.ndarray
    R0: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def mesh(self) -> TriMesh:
        return self.regular_parts[0].mesh

    def singular_part(self, j: int, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(p - self.anchors[j], axis=1)
        chi = anchor_cutoff(self.R0)
        with np.errstate(divide="ignore"):
            return np.where(r < self.R0, chi(r) * log_kernel(np.maximum(r, 1e-300)), 0.0)

    def singular_grad(self, j: int, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = p - self.anchors[j]
        r = np.maximum(np.linalg.norm(d, axis=1), 1e-300)
        chi = anchor_cutoff(self.R0)
        dr = chi.d1(r) * log_kernel(r) - chi(r) / (2 * np.pi * r)
        return (dr / r)[:, None] * d

    def value(self, j: int, points, extrapolate: bool = False) -> np.ndarray:
        """G_j at points (infinite at the anchor itself)."""
        p = np.atleast_2d(points)
        s = self.smooth_remainder(j)
        r = np.maximum(np.linalg.norm(p - self.anchors[j], axis=1), 1e-300)
        return log_kernel(r) + (s.extrapolated(p) if extrapolate else evaluate(s, p))

    def gradient(self, j: int, points, extrapolate: bool = False) -> np.ndarray:
        """Gradient from the full-kernel splitting G_j = logkernel + smooth remainder.

        The remainder of that splitting has no cut-off transition, so its
        recovered gradient is far more accurate than the one of the cut-off
        regular part.
        """
        p = np.atleast_2d(points)
        d = p - self.anchors[j]
        r2 = np.maximum(np.sum(d * d, axis=1), 1e-300)
        return -d / (2 * np.pi * r2[:, None]) + self.smooth_remainder(j).gradient(p, extrapolate)

    def smooth_remainder(self, j: int) -> FeField:
        cache = self.diagnostics.setdefault("_smooth", {})
        if j not in cache:
            cache[j] = _full_kernel_remainder(self.mesh, self.anchors[j], self.bc_variant)
        return cache[j]

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.Gmatrix - self.Gmatrix.T)))

    def to_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.Gmatrix, delimiter=",", fmt="%.12g")


def _outward_normals(mesh: TriMesh) -> np.ndarray:
    """Unit outward normal of every boundary edge."""
    owner = {}
    for t, tri in enumerate(mesh.triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            owner[(min(a, b), max(a, b))] = t
    e = mesh.boundary_edges
    pts = mesh.vertices
    d = pts[e[:, 1]] - pts[e[:, 0]]
    n = np.stack([d[:, 1], -d[:, 0]], axis=1) / np.linalg.norm(d, axis=1)[:, None]
    cent = np.array([pts[mesh.triangles[owner[(min(a, b), max(a, b))]]].mean(axis=0) for a, b in e])
    flip = np.einsum("nd,nd->n", cent - pts[e[:, 0]], n) > 0
    n[flip] *= -1
    return n


def _full_kernel_remainder(mesh: TriMesh, P, bc_variant: str) -> FeField:
    """G - logkernel(|y - P|): Neumann data -dL/dn (or Dirichlet data -L) on the boundary."""
    P = np.asarray(P, dtype=float)

    def L(x):
        return log_kernel(np.maximum(np.linalg.norm(x - P, axis=-1), 1e-300))

    if bc_variant == "dirichlet":
        return solve_dirichlet(mesh, 0.0, boundary_value=lambda x: -L(x))
    pts = mesh.vertices
    e = mesh.boundary_edges
    n = _outward_normals(mesh)
    a, b = pts[e[:, 0]], pts[e[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    fb = np.zeros(len(pts))
    xg, wg = np.polynomial.legendre.leggauss(4)
    for t, wt in zip(0.5 * (xg + 1), 0.5 * wg):
        x = a + t * (b - a)
        d = x - P
        gradL = -d / (2 * np.pi * np.sum(d * d, axis=1)[:, None])
        c = wt * length * (-np.einsum("nd,nd->n", gradL, n))
        np.add.at(fb, e[:, 0], c * (1 - t))
        np.add.at(fb, e[:, 1], c * t)
    w = mesh.vertex_weights
    b_vec = fb - w / w.sum()
    b_vec -= b_vec.sum() * w / w.sum()  # discrete compatibility
    K = _stiffness(mesh)
    A = sp.bmat([[K, sp.csr_matrix(w[:, None])], [sp.csr_matrix(w[None, :]), None]], format="csc")
    x = sparse_solve(A, np.concatenate([b_vec, [0.0]]))
    return FeField(mesh, x[: mesh.n_vertices])


def _check_anchor_vertices(mesh: TriMesh, anchors: np.ndarray):
    from scipy.spatial import cKDTree

    d, _ = cKDTree(mesh.vertices).query(anchors)
    if np.any(d > 1e-12):
        warnings.warn("anchor is not a mesh vertex; Green values use barycentric interpolation")


def green_functions(mesh: TriMesh, anchors, bc_variant: str = "neumann_mean_zero",
                    R0: float | None = None) -> GreenData:
    """Green functions of the plate, one per anchor.

    The regular part g_j = G_j - chi*logkernel is assembled from the smooth
    remainder s_j = G_j - logkernel, whose data (boundary values or fluxes of
    the kernel, plus the constant compensating source) carry no cut-off
    transition. Solving for g_j against the commutator source directly gives
    the same function but needs the annulus R0/2 < r < R0 to be resolved.
    """
    P = np.asarray(anchors, dtype=float).reshape(-1, 2)
    if R0 is None:
        raise ValueError("cut-off radius R0 is required")
    if bc_variant not in ("neumann_mean_zero", "dirichlet"):
        raise ValueError(f"unknown bc_variant {bc_variant!r}")
    _check_anchor_vertices(mesh, P)
    w = mesh.vertex_weights
    area = w.sum()
    chi = anchor_cutoff(R0)
    chi_log_int = _disk_integral_of_cutoff_log(R0)
    parts, smooth, shifts = [], {}, []
    for j, Pj in enumerate(P):
        s = _full_kernel_remainder(mesh, Pj, bc_variant).values
        r = np.linalg.norm(mesh.vertices - Pj, axis=1)
        outer = np.where(r > 0.5 * R0, (1.0 - chi(r)) * log_kernel(np.maximum(r, 1e-300)), 0.0)
        g = s + outer
        if bc_variant == "neumann_mean_zero":
            # zero mean of the full Green function: int g + int chi*logkernel = 0
            c = (w @ g + chi_log_int) / area
            g, s = g - c, s - c
            shifts.append(float(c))
        parts.append(FeField(mesh, g))
        smooth[j] = FeField(mesh, s)
    J = len(P)
    G = np.empty((J, J))
    for j in range(J):
        vals = evaluate(smooth[j], P)
        for k in range(J):
            rk = np.linalg.norm(P[k] - P[j])
            G[j, k] = vals[k] + (log_kernel(rk) if k != j else 0.0)
    diag = {"mean_shift": shifts, "area": area, "_smooth": smooth}
    return GreenData(tuple(parts), G, bc_variant, P, float(R0), diag)


# ---------------------------------------------------------------- anchor values

def _polar_integral(fun, P, R0: float, n_rad: int = 24, n_ang: int = 64) -> float:
    """int over B_R0(P) of chi*logkernel*fun, with panels graded toward the centre."""
    chi = anchor_cutoff(R0)
    edges = np.concatenate([[0.0], R0 * 0.5 ** np.arange(12, -1, -1)])
    xg, wg = np.polynomial.legendre.leggauss(n_rad // 2)
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        rho = 0.5 * (a + b) + 0.5 * (b - a) * xg
        wr = 0.5 * (b - a) * wg
        pts = P + (rho[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=1)[None])
        fv = np.asarray(fun(pts.reshape(-1, 2)), dtype=float).reshape(len(rho), n_ang)
        total += np.sum(wr * chi(rho) * log_kernel(rho) * rho * fv.mean(axis=1)) * 2 * np.pi
    return float(total)


@dataclass(frozen=True)
class AnchorValues:
    by_interpolation: np.ndarray
    by_green_quadrature: np.ndarray
    subtracted_mean: float

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.by_interpolation - self.by_green_quadrature)))


def value_at_anchor(green: GreenData, source, u_bot: FeField | None = None) -> AnchorValues:
    """Value of the mean-zero plate solution at the anchors, computed two ways."""
    mesh = green.mesh
    res = None
    if u_bot is None:
        res = solve_neumann_mean_zero(mesh, source)
        u_bot = res.field
    interp = np.asarray(evaluate(u_bot, green.anchors))
    xq, wq = fem.quad_points(mesh.vertices, mesh.triangles)
    fq = fem._eval_callable(source, xq)
    quad = []
    for j, Pj in enumerate(green.anchors):
        gq = np.einsum("qk,mk->mq", fem.QUAD7_BARY, green.regular_parts[j].values[mesh.triangles])
        regular = float(np.sum(wq * gq * fq))
        singular = _polar_integral(lambda y: fem._eval_callable(source, y), Pj, green.R0)
        quad.append(regular + singular)
    return AnchorValues(interp, np.array(quad), res.subtracted_mean if res else float("nan"))


# ---------------------------------------------------------------- error norms

def l2_error(fieldv: FeField, exact) -> float:
    mesh = fieldv.mesh
    xq, wq = fem.quad_points(mesh.vertices, mesh.triangles)
    uh = np.einsum("qk,mk->mq", fem.QUAD7_BARY, fieldv.values[mesh.triangles])
    ue = fem._eval_callable(exact, xq)
    return float(np.sqrt(np.sum(wq * (uh - ue) ** 2)))


def h1_seminorm_error(fieldv: FeField, exact_grad) -> float:
    mesh = fieldv.mesh
    xq, wq = fem.quad_points(mesh.vertices, mesh.triangles)
    _, grads = fem.triangle_geometry(mesh.vertices, mesh.triangles)
    gh = np.einsum("mi,mid->md", fieldv.values[mesh.triangles], grads)
    ge = np.asarray(exact_grad(xq.reshape(-1, 2)), dtype=float).reshape(xq.shape)
    return float(np.sqrt(np.sum(wq * np.sum((gh[:, None, :] - ge) ** 2, axis=2))))
