"""Linear triangle finite elements: assembly, quadrature and point location.

Both planar problems and axisymmetric problems in (r, z) are supported; in
the latter case every integral carries the factor 2*pi*r.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

# Dunavant degree-5 rule on the reference triangle (barycentric coords, weights sum to 1).
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_W0, _W1, _W2 = 0.225, 0.132394152788506, 0.125939180544827
QUAD7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
QUAD7_W = np.array([_W0, _W1, _W1, _W1, _W2, _W2, _W2])

# 3-point Gauss rule on [0, 1] for edge integrals
_G3X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_G3W = np.array([5 / 18, 8 / 18, 5 / 18])


def triangle_geometry(pts: np.ndarray, tris: np.ndarray):
    """Signed areas and gradients of the three barycentric functions per triangle.

    Returns (area, grads) with grads of shape (M, 3, 2).
    """
    p0, p1, p2 = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    # grad(lambda_i) = rot90(opposite edge) / det
    e0 = p2 - p1
    e1 = p0 - p2
    e2 = p1 - p0
    grads = np.empty((len(tris), 3, 2))
    for i, e in enumerate((e0, e1, e2)):
        grads[:, i, 0] = -e[:, 1] / det
        grads[:, i, 1] = e[:, 0] / det
    return area, grads


def quad_points(pts: np.ndarray, tris: np.ndarray):
    """Physical 7-point quadrature nodes (M, 7, 2) and weights (M, 7) including the area."""
    area, _ = triangle_geometry(pts, tris)
    corners = pts[tris]  # (M, 3, 2)
    xq = np.einsum("qk,mkd->mqd", QUAD7_BARY, corners)
    wq = np.abs(area)[:, None] * QUAD7_W[None, :]
    return xq, wq


def _radial_weight(xq: np.ndarray, axisym: bool):
    if not axisym:
        return np.ones(xq.shape[:-1])
    return 2.0 * np.pi * xq[..., 0]


def stiffness(pts, tris, coef=None, axisym: bool = False) -> sp.csr_matrix:
    """Stiffness matrix of int coef * grad u . grad v (times 2*pi*r when axisym).

    coef is a per-triangle constant (or None for 1).
    """
    area, grads = triangle_geometry(pts, tris)
    w = np.abs(area)
    if axisym:
        # gradients are constant, so int r over the triangle = area * centroid r
        w = w * 2.0 * np.pi * pts[tris, 0].mean(axis=1)
    if coef is not None:
        w = w * np.asarray(coef, dtype=float)
    local = np.einsum("mid,mjd->mij", grads, grads) * w[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = len(pts)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def dirichlet_energy(pts, tris, values, coef=None, axisym: bool = False) -> float:
    """int coef |grad u|^2, summed element by element (no cancellation as in u.K.u)."""
    area, grads = triangle_geometry(pts, tris)
    w = np.abs(area)
    if axisym:
        w = w * 2.0 * np.pi * pts[tris, 0].mean(axis=1)
    if coef is not None:
        w = w * np.asarray(coef, dtype=float)
    g = np.einsum("mi,mid->md", np.asarray(values, dtype=float)[tris], grads)
    return float(np.sum(w * np.sum(g * g, axis=1)))


def mass(pts, tris, axisym: bool = False) -> sp.csr_matrix:
    xq, wq = quad_points(pts, tris)
    wq = wq * _radial_weight(xq, axisym)
    phi = QUAD7_BARY  # (7, 3)
    local = np.einsum("mq,qi,qj->mij", wq, phi, phi)
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = len(pts)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def load_vector(pts, tris, f, axisym: bool = False) -> np.ndarray:
    """int f * phi_i (times 2*pi*r when axisym); f is a callable on (N, 2) arrays or a scalar."""
    xq, wq = quad_points(pts, tris)
    wq = wq * _radial_weight(xq, axisym)
    fq = _eval_callable(f, xq)
    local = np.einsum("mq,mq,qi->mi", wq, fq, QUAD7_BARY)
    return np.bincount(tris.ravel(), weights=local.ravel(), minlength=len(pts))


def edge_load_vector(pts, edges, g, axisym: bool = False) -> np.ndarray:
    """int_edge g * phi_i ds for a list of boundary edges (K, 2)."""
    edges = np.asarray(edges, dtype=int)
    out = np.zeros(len(pts))
    if len(edges) == 0:
        return out
    a, b = pts[edges[:, 0]], pts[edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    for t, wt in zip(_G3X, _G3W):
        x = a + t * (b - a)
        gv = _eval_callable(g, x)
        if axisym:
            gv = gv * 2.0 * np.pi * x[:, 0]
        c = wt * length * gv
        np.add.at(out, edges[:, 0], c * (1 - t))
        np.add.at(out, edges[:, 1], c * t)
    return out


def lumped_weights(pts, tris, axisym: bool = False) -> np.ndarray:
    """Row sums of the consistent mass matrix: int phi_i (the mesh-quadrature weights)."""
    return load_vector(pts, tris, 1.0, axisym=axisym)


def _eval_callable(f, x: np.ndarray) -> np.ndarray:
    shape = x.shape[:-1]
    if callable(f):
        v = np.asarray(f(x.reshape(-1, 2)), dtype=float)
        return np.broadcast_to(v, (int(np.prod(shape)),)).reshape(shape)
    return np.full(shape, float(f))


class PointLocator:
    """Finds the containing triangle and barycentric coordinates of query points."""

    def __init__(self, pts: np.ndarray, tris: np.ndarray, k: int = 12):
        self.pts = pts
        self.tris = tris
        self.k = min(k, len(tris))
        self._tree = cKDTree(pts[tris].mean(axis=1))
        corners = pts[tris]
        self._t = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
        self._tinv = np.linalg.inv(self._t)
        self._memo: dict = {}

    def _bary(self, x, cand):
        rel = x[:, None, :] - self.pts[self.tris[cand, 0]]
        lam12 = np.einsum("nkij,nkj->nki", self._tinv[cand], rel)
        return np.concatenate([1 - lam12.sum(axis=2, keepdims=True), lam12], axis=2)

    def _best(self, x, k):
        _, cand = self._tree.query(x, k=k)
        cand = cand.reshape(len(x), k)
        lam = self._bary(x, cand)
        score = lam.min(axis=2)
        best = np.argmax(score, axis=1)
        rows = np.arange(len(x))
        return cand[rows, best], lam[rows, best], score[rows, best]

    def locate(self, x: np.ndarray, tol: float = 1e-10, extrapolate: bool = False):
        """Return (tri_index, bary). tri_index is -1 for points outside the mesh,
        unless extrapolate is set, in which case the nearest candidate element
        (linear extension) is used."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        key = (x.shape, hash(x.tobytes()), tol, extrapolate)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        idx, bary, score = self._best(x, self.k)
        miss = np.nonzero(score < -tol)[0]
        if len(miss):
            k2 = min(64, len(self.tris))
            i2, b2, s2 = self._best(x[miss], k2)
            better = s2 > score[miss]
            idx[miss[better]], bary[miss[better]], score[miss[better]] = i2[better], b2[better], s2[better]
        ok = score >= -tol
        if not extrapolate:
            # brute force for the rare misses of the nearest-centroid heuristic
            for i in np.nonzero(~ok)[0][:64]:
                lam_all = self._bary(x[i:i + 1], np.arange(len(self.tris))[None, :])[0]
                j = int(np.argmax(lam_all.min(axis=1)))
                if lam_all[j].min() >= -tol:
                    idx[i], bary[i], ok[i] = j, lam_all[j], True
            idx = np.where(ok, idx, -1)
        if len(self._memo) > 8:
            self._memo.clear()
        self._memo[key] = (idx, bary)
        return idx, bary

    def interpolate(self, values: np.ndarray, x: np.ndarray, outside: float = np.nan,
                    extrapolate: bool = False) -> np.ndarray:
        idx, bary = self.locate(x, extrapolate=extrapolate)
        vals = np.einsum("ni,ni->n", values[self.tris[np.maximum(idx, 0)]], bary)
        return np.where(idx >= 0, vals, outside)


def recovered_gradient(pts, tris, values, axisym: bool = False) -> np.ndarray:
    """Area-weighted vertex averages of the piecewise-constant P1 gradient, shape (N, 2)."""
    area, grads = triangle_geometry(pts, tris)
    g = np.einsum("mi,mid->md", values[tris], grads)
    w = np.abs(area)
    acc = np.zeros((len(pts), 2))
    wsum = np.zeros(len(pts))
    for i in range(3):
        np.add.at(acc, tris[:, i], g * w[:, None])
        np.add.at(wsum, tris[:, i], w)
    return acc / wsum[:, None]
