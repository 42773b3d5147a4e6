"""Axisymmetric finite-element solve of the full plate + single rod problem.

The junction with a disk plate of radius R and thickness h and a centred rod
of radius a*h and length l is reduced to the meridian half-plane (r, z):

    rod   : 0 < r < a h,   0 < z < l   (coefficient gamma * h**-alpha)
    plate : a h < r < R,   0 < z < h   (coefficient 1)

One bilinear form over the union carries the transmission conditions. The
tensor-product mesh is graded geometrically toward the re-entrant edge
(a h, h). The same machinery, run at h = 1 with other boundary data, gives
the junction constant of the unbounded layer + semi-cylinder problem.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fem
from .poisson2d import sparse_solve

CORNER_RATIO = 0.6
CORNER_RINGS = 6
GRADING_BETA = 2.0


def graded_segment(length: float, s_far: float, beta: float = GRADING_BETA,
                   rings: int = CORNER_RINGS, ratio: float = CORNER_RATIO) -> np.ndarray:
    """Nodes on [0, length] refined toward 0.

    Power-law grading x_i = length (i/N)^beta with N chosen so the outermost
    cell is about s_far; the innermost cell is further split into `rings`
    cells shrinking geometrically by `ratio` toward 0.
    """
    if length <= 0:
        raise ValueError("segment length must be positive")
    n = max(2, int(np.ceil(beta * length / min(s_far, length))))
    x = length * (np.arange(n + 1) / n) ** beta
    first = x[1]
    inner = first * ratio ** np.arange(1, rings + 1)[::-1]
    return np.concatenate([[0.0], inner, x[1:]])


@dataclass(frozen=True)
class AxisymDomain:
    rod_radius: float       # a*h in physical units
    plate_radius: float     # R
    thickness: float        # h
    rod_length: float       # l
    coef_plate: float = 1.0
    coef_rod: float = 1.0

    def __post_init__(self):
        if not 0 < self.rod_radius < self.plate_radius:
            raise ValueError("need 0 < rod radius < plate radius")
        if not 0 < self.thickness < self.rod_length:
            raise ValueError("need 0 < thickness < rod length")
        if self.coef_plate <= 0 or self.coef_rod <= 0:
            raise ValueError("coefficients must be positive")

    @classmethod
    def physical(cls, a: float, h: float, R_plate: float, l: float, gamma: float, alpha: int):
        if alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")
        return cls(a * h, R_plate, h, l, 1.0, gamma * h ** (-alpha))


@dataclass(frozen=True)
class AxisymMesh:
    vertices: np.ndarray     # (N, 2) in (r, z)
    triangles: np.ndarray
    region: np.ndarray       # 0 plate, 1 rod, per triangle
    r_nodes: np.ndarray
    z_nodes: np.ndarray
    edges: dict              # tag -> (K, 2) boundary edges
    cell_first: np.ndarray | None = None  # (nr-1, nz-1) index of the first triangle per cell, -1 if absent

    @property
    def n_vertices(self):
        return len(self.vertices)


class TensorLocator:
    """Exact point location on the tensor-product meshes by bisection in r and z.

    Needed because the strongly graded cells defeat nearest-centroid search.
    """

    def __init__(self, mesh: AxisymMesh):
        self.mesh = mesh
        self.tris = mesh.triangles

    def locate(self, x, tol: float = 1e-10, extrapolate: bool = False):
        m = self.mesh
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rn, zn = m.r_nodes, m.z_nodes
        i = np.clip(np.searchsorted(rn, x[:, 0], side="right") - 1, 0, len(rn) - 2)
        k = np.clip(np.searchsorted(zn, x[:, 1], side="right") - 1, 0, len(zn) - 2)
        s = (x[:, 0] - rn[i]) / (rn[i + 1] - rn[i])
        t = (x[:, 1] - zn[k]) / (zn[k + 1] - zn[k])
        first = m.cell_first[i, k]
        diag0 = (i + k) % 2 == 0
        bary = np.empty((len(x), 3))
        second = np.where(diag0, s < t, s + t > 1)
        # diagonal v00-v11: (v00, v10, v11) and (v00, v11, v01)
        a = diag0 & ~second
        bary[a] = np.stack([1 - s[a], s[a] - t[a], t[a]], axis=1)
        a = diag0 & second
        bary[a] = np.stack([1 - t[a], s[a], t[a] - s[a]], axis=1)
        # diagonal v10-v01: (v00, v10, v01) and (v10, v11, v01)
        a = ~diag0 & ~second
        bary[a] = np.stack([1 - s[a] - t[a], s[a], t[a]], axis=1)
        a = ~diag0 & second
        bary[a] = np.stack([1 - t[a], s[a] + t[a] - 1, 1 - s[a]], axis=1)
        idx = np.where(first >= 0, first + second.astype(int), -1)
        if not extrapolate:
            inside = bary.min(axis=1) >= -tol
            idx = np.where(inside, idx, -1)
        return idx, bary

    def interpolate(self, values, x, outside: float = np.nan, extrapolate: bool = False):
        idx, bary = self.locate(x, extrapolate=extrapolate)
        vals = np.einsum("ni,ni->n", values[self.tris[np.maximum(idx, 0)]], bary)
        return np.where(idx >= 0, vals, outside)


def build_mesh(dom: AxisymDomain, level: int = 0, plate_cells: int = 30, rod_cells: int = 40,
               beta: float = GRADING_BETA) -> AxisymMesh:
    """Tensor-product triangulation graded toward the re-entrant edge (a h, h)."""
    ah, R, h, l = dom.rod_radius, dom.plate_radius, dom.thickness, dom.rod_length
    f = 2.0**level
    # r in the rod, refined toward r = ah
    rr = ah - graded_segment(ah, ah / (6 * f), beta)[::-1]
    # r in the plate, refined toward r = ah
    rp = ah + graded_segment(R - ah, (R - ah) / (plate_cells * f), beta)
    # z in the plate layer, refined toward z = h
    zp = h - graded_segment(h, h / (8 * f), beta)[::-1]
    # z along the rod above the plate, refined toward z = h
    zr = h + graded_segment(l - h, (l - h) / (rod_cells * f), beta)
    r_nodes = np.concatenate([rr, rp[1:]])
    z_nodes = np.concatenate([zp, zr[1:]])
    i_ah = len(rr) - 1
    k_h = len(zp) - 1
    nr, nz = len(r_nodes), len(z_nodes)
    # vertex (i, k) exists if i <= i_ah or k <= k_h
    exists = np.zeros((nr, nz), dtype=bool)
    exists[: i_ah + 1, :] = True
    exists[:, : k_h + 1] = True
    index = -np.ones((nr, nz), dtype=int)
    index[exists] = np.arange(np.count_nonzero(exists))
    I, K = np.nonzero(exists)
    verts = np.stack([r_nodes[I], z_nodes[K]], axis=1)
    tris, region = [], []
    cell_first = -np.ones((nr - 1, nz - 1), dtype=int)
    for i in range(nr - 1):
        kmax = nz - 1 if i < i_ah else k_h
        for k in range(kmax):
            cell_first[i, k] = len(tris)
            v00, v10 = index[i, k], index[i + 1, k]
            v01, v11 = index[i, k + 1], index[i + 1, k + 1]
            reg = 1 if i < i_ah else 0
            # alternate the diagonal direction to avoid a directional bias
            if (i + k) % 2 == 0:
                tris += [(v00, v10, v11), (v00, v11, v01)]
            else:
                tris += [(v00, v10, v01), (v10, v11, v01)]
            region += [reg, reg]
    tris = np.array(tris, dtype=int)
    region = np.array(region, dtype=int)

    def chain(ids):
        ids = [x for x in ids if x >= 0]
        return np.array(list(zip(ids[:-1], ids[1:])), dtype=int).reshape(-1, 2)

    edges = {
        "rod_top": chain([index[i, nz - 1] for i in range(i_ah + 1)]),
        "outer": chain([index[nr - 1, k] for k in range(k_h + 1)]),
        "plate_top": chain([index[i, k_h] for i in range(i_ah, nr)]),
        "rod_lateral": chain([index[i_ah, k] for k in range(k_h, nz)]),
        "bottom": chain([index[i, 0] for i in range(nr)]),
        "axis": chain([index[0, k] for k in range(nz)]),
    }
    return AxisymMesh(verts, tris, region, r_nodes, z_nodes, edges, cell_first)


@dataclass
class ReferenceSolution:
    domain: AxisymDomain
    mesh: AxisymMesh
    values: np.ndarray
    h: float = float("nan")
    alpha: int | None = None
    gamma: float | None = None
    energy: float = 0.0
    residual: float = 0.0
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def n_dof(self) -> int:
        return len(self.values)

    def locator(self) -> fem.PointLocator:
        loc = self.stats.get("_locator")
        if loc is None:
            if self.mesh.cell_first is not None:
                loc = TensorLocator(self.mesh)
            else:
                loc = fem.PointLocator(self.mesh.vertices, self.mesh.triangles)
            self.stats["_locator"] = loc
        return loc

    def __call__(self, rz) -> np.ndarray:
        return self.locator().interpolate(self.values, np.atleast_2d(rz))

    def part_energy(self, region: int) -> float:
        """Dirichlet integral over one part, without its coefficient (2 pi r weight)."""
        m = self.mesh
        return fem.dirichlet_energy(m.vertices, m.triangles[m.region == region], self.values, axisym=True)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex", "r", "z", "value"])
            for i, ((r, z), v) in enumerate(zip(self.mesh.vertices, self.values)):
                w.writerow([i, f"{r:.12g}", f"{z:.12g}", f"{v:.14g}"])


def solve_axisym(dom: AxisymDomain | None, mesh: AxisymMesh, *, source_plate=0.0, source_rod=0.0,
                 dirichlet: dict | None = None, flux: dict | None = None,
                 coef: np.ndarray | None = None) -> ReferenceSolution:
    """Galerkin solve of -div(k grad u) = f with 2 pi r weights.

    dirichlet maps edge tags to prescribed values, flux maps edge tags to the
    outward conormal flux k du/dn; untagged edges are natural (zero flux).
    """
    t0 = time.perf_counter()
    pts, tris = mesh.vertices, mesh.triangles
    if coef is None:
        coef = np.ones(len(tris)) if dom is None else np.where(mesh.region == 1, dom.coef_rod, dom.coef_plate)
    K = fem.stiffness(pts, tris, coef=coef, axisym=True).tocsr()
    b = np.zeros(len(pts))
    for reg, src in ((0, source_plate), (1, source_rod)):
        sel = mesh.region == reg
        if np.any(sel) and (callable(src) or src != 0.0):
            b += fem.load_vector(pts, tris[sel], src, axisym=True)
    for tag, g in (flux or {}).items():
        b += fem.edge_load_vector(pts, mesh.edges[tag], g, axisym=True)
    fixed = {}
    for tag, val in (dirichlet or {}).items():
        ids = np.unique(mesh.edges[tag])
        vals = val(pts[ids]) if callable(val) else np.full(len(ids), float(val))
        fixed.update(zip(ids.tolist(), np.asarray(vals, dtype=float).tolist()))
    if not fixed:
        raise ValueError("at least one Dirichlet boundary is required")
    u = np.zeros(len(pts))
    fix = np.array(sorted(fixed))
    u[fix] = [fixed[v] for v in fix]
    free = np.setdiff1d(np.arange(len(pts)), fix)
    Kff = K[free][:, free]
    rhs = b[free] - K[free][:, fix] @ u[fix]
    u[free] = sparse_solve(Kff, rhs, symmetric_definite=True)
    res = float(np.linalg.norm(Kff @ u[free] - rhs) / max(np.linalg.norm(rhs), 1e-300))
    energy = fem.dirichlet_energy(pts, tris, u, coef=coef, axisym=True)
    # the reaction at Dirichlet nodes is the discrete outflow through those boundaries
    reaction = K @ u - b
    stats = {"load_total": float(b.sum()), "dirichlet_reaction": float(reaction[fix].sum())}
    h = dom.thickness if dom is not None else float("nan")
    return ReferenceSolution(dom, mesh, u, h, None, None, energy, res,
                             time.perf_counter() - t0, stats)


def build_rect_mesh(r0: float, r1: float, z0: float, z1: float, nr: int, nz: int) -> AxisymMesh:
    """Uniform criss-cross-free rectangle mesh in (r, z) with tags left/right/bottom/top."""
    r = np.linspace(r0, r1, nr + 1)
    z = np.linspace(z0, z1, nz + 1)
    R, Z = np.meshgrid(r, z, indexing="ij")
    verts = np.stack([R.ravel(), Z.ravel()], axis=1)
    idx = np.arange(len(verts)).reshape(nr + 1, nz + 1)
    tris = []
    for i in range(nr):
        for k in range(nz):
            a, b, c, d = idx[i, k], idx[i + 1, k], idx[i + 1, k + 1], idx[i, k + 1]
            tris += [(a, b, c), (a, c, d)]

    def chain(ids):
        return np.array(list(zip(ids[:-1], ids[1:])), dtype=int)

    edges = {"left": chain(idx[0, :]), "right": chain(idx[-1, :]),
             "bottom": chain(idx[:, 0]), "top": chain(idx[:, -1])}
    tris = np.array(tris, dtype=int)
    return AxisymMesh(verts, tris, np.zeros(len(tris), dtype=int), r, z, edges)


def solve_reference(a: float, h: float, R_plate: float, l: float, gamma: float, alpha: int,
                    f0=0.0, f1=0.0, level: int = 0, lateral_bc: str = "neumann",
                    mesh_kw: dict | None = None) -> ReferenceSolution:
    """Full problem with plate source f0(r) and rod source h**-alpha * f1(z).

    f0 is a function of the in-plane radius only and f1 of z only; both may be
    scalars. The rod top carries the homogeneous Dirichlet condition.
    """
    dom = AxisymDomain.physical(a, h, R_plate, l, gamma, alpha)
    mesh = build_mesh(dom, level, **(mesh_kw or {}))

    def wrap_plate(x):
        return f0(x[:, 0]) if callable(f0) else np.full(len(x), float(f0))

    scale = h ** (-alpha)

    def wrap_rod(x):
        v = f1(x[:, 1]) if callable(f1) else np.full(len(x), float(f1))
        return scale * v

    # inside the socket (r < a h, z < h) the rod equation holds
    dirichlet = {"rod_top": 0.0}
    if lateral_bc == "dirichlet":
        dirichlet["outer"] = 0.0
    sol = solve_axisym(dom, mesh, source_plate=wrap_plate, source_rod=wrap_rod, dirichlet=dirichlet)
    sol.alpha, sol.gamma, sol.h = alpha, gamma, h
    return sol


def restrict_to_parts(sol: ReferenceSolution):
    """Plate part (perforated plate r > a h) and rod part (whole rod incl. socket).

    Returned as (vertex ids, values) pairs; interface vertices belong to both.
    """
    m = sol.mesh
    ah = sol.domain.rod_radius
    r, z = m.vertices[:, 0], m.vertices[:, 1]
    tol = 1e-12 * max(1.0, ah)
    plate_ids = np.nonzero((r >= ah - tol) & (z <= sol.domain.thickness + tol))[0]
    rod_ids = np.nonzero(r <= ah + tol)[0]
    return (plate_ids, sol.values[plate_ids]), (rod_ids, sol.values[rod_ids])
