"""Unstructured triangle meshes of the plate cross-section.

Point placement is done here (boundary sampling, a hexagonal interior
lattice and graded rings around the anchors); the triangulation kernel is
Qhull's Delaunay via scipy, followed by boundary recovery through midpoint
insertion and removal of exterior triangles.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .fem import PointLocator, lumped_weights, triangle_geometry
from .geometry import PlateDomain, Shape, distance_to_polyline, points_in_polygon

GRADING_RATIO = 0.7
GRADING_DEPTH = 16  # finest ring spacing is target_size / GRADING_DEPTH


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: tuple

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def locator(self) -> PointLocator:
        return PointLocator(self.vertices, self.triangles)

    @cached_property
    def vertex_weights(self) -> np.ndarray:
        """Integrals of the hat functions (mesh quadrature weights)."""
        return lumped_weights(self.vertices, self.triangles)

    def areas(self) -> np.ndarray:
        return triangle_geometry(self.vertices, self.triangles)[0]

    def total_area(self) -> float:
        return float(self.areas().sum())

    def edges_with_tag(self, tag: str) -> np.ndarray:
        mask = np.array([t == tag for t in self.edge_tags], dtype=bool)
        return self.boundary_edges[mask]

    def boundary_vertices(self, tag: str | None = None) -> np.ndarray:
        e = self.boundary_edges if tag is None else self.edges_with_tag(tag)
        return np.unique(e.ravel())

    def boundary_length(self, tag: str | None = None) -> float:
        e = self.boundary_edges if tag is None else self.edges_with_tag(tag)
        v = self.vertices
        return float(np.linalg.norm(v[e[:, 1]] - v[e[:, 0]], axis=1).sum())

    def diameters(self) -> np.ndarray:
        c = self.vertices[self.triangles]
        d = [np.linalg.norm(c[:, i] - c[:, (i + 1) % 3], axis=1) for i in range(3)]
        return np.max(d, axis=0)

    def export_off(self, path: str | Path) -> None:
        """Plain-text export: counts, coordinates, index triples, tagged boundary edges."""
        lines = [f"{self.n_vertices} {self.n_triangles} {len(self.boundary_edges)}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines += [f"{a} {b} {c}" for a, b, c in self.triangles]
        lines += [f"{a} {b} {t}" for (a, b), t in zip(self.boundary_edges, self.edge_tags)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_off(cls, path: str | Path) -> "TriMesh":
        rows = Path(path).read_text().split("\n")
        nv, nt, ne = map(int, rows[0].split())
        v = np.array([list(map(float, r.split())) for r in rows[1:1 + nv]])
        t = np.array([list(map(int, r.split())) for r in rows[1 + nv:1 + nv + nt]], dtype=int)
        e, tags = [], []
        for r in rows[1 + nv + nt:1 + nv + nt + ne]:
            a, b, tag = r.split()
            e.append((int(a), int(b)))
            tags.append(tag)
        return cls(v, t, np.array(e, dtype=int).reshape(-1, 2), tuple(tags))


# ---------------------------------------------------------------- point sets

def _sample_loop(shape: Shape, spacing: float, center=(0.0, 0.0), scale: float = 1.0,
                 even: bool = False) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    if shape.is_disk:
        R = shape.radius * scale
        n = max(8, int(np.ceil(2 * np.pi * R / spacing)))
        if even and n % 2:
            n += 1
        t = 2 * np.pi * np.arange(n) / n
        return c + R * np.stack([np.cos(t), np.sin(t)], axis=1)
    v = np.asarray(shape.vertices, dtype=float) * scale
    out = []
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        s = np.arange(n) / n
        out.append(a + s[:, None] * (b - a))
    return c + np.concatenate(out)


def _hex_lattice(lo, hi, spacing, origin=(0.0, 0.0)) -> np.ndarray:
    dy = spacing * np.sqrt(3) / 2
    ox, oy = origin
    j0 = int(np.floor((lo[1] - oy) / dy)) - 1
    j1 = int(np.ceil((hi[1] - oy) / dy)) + 1
    i0 = int(np.floor((lo[0] - ox) / spacing)) - 1
    i1 = int(np.ceil((hi[0] - ox) / spacing)) + 1
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1), indexing="ij")
    x = ox + spacing * (ii + 0.5 * (jj % 2))
    y = oy + dy * jj
    return np.stack([x.ravel(), y.ravel()], axis=1)


def _ring_schedule(size: float, r_start: float, fine: float):
    """Ring radii and spacings growing by 1/GRADING_RATIO from `fine` up to `size`."""
    radii, spacings = [], []
    s, r = fine, r_start
    while s < size:
        r += s
        radii.append(r)
        spacings.append(s)
        s /= GRADING_RATIO
    return np.array(radii), np.array(spacings)


def _ring_points(center, radii, spacings, even: bool) -> list[np.ndarray]:
    pts = []
    for rk, sk in zip(radii, spacings):
        n = max(6, int(np.ceil(2 * np.pi * rk / sk)))
        if even and n % 2:
            n += 1
        t = 2 * np.pi * np.arange(n) / n
        pts.append(np.asarray(center) + rk * np.stack([np.cos(t), np.sin(t)], axis=1))
    return pts


# ---------------------------------------------------------------- triangulation

def _triangulate(points: np.ndarray, loops: list[np.ndarray], loop_tags: list[str],
                 outer_idx: int, max_rounds: int = 30):
    """Delaunay of `points` + loop points, with every loop segment recovered.

    loops are closed polylines given as arrays of coordinates; they are
    refined in place (midpoint insertion) until every segment is a mesh edge.
    """
    loops = [np.asarray(l, dtype=float) for l in loops]
    for _ in range(max_rounds):
        loop_pts = np.concatenate(loops)
        allp = np.concatenate([loop_pts, points])
        # ghost points keep all real points strictly inside the convex hull
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        cen, rad = 0.5 * (lo + hi), 0.75 * np.linalg.norm(hi - lo) + 1.0
        t = 2 * np.pi * np.arange(16) / 16
        ghosts = cen + rad * np.stack([np.cos(t), np.sin(t)], axis=1)
        tri = Delaunay(np.concatenate([allp, ghosts]))
        simp = tri.simplices
        simp = simp[(simp < len(allp)).all(axis=1)]
        edges = np.sort(np.concatenate([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]]), axis=1)
        edge_set = set(map(tuple, edges))
        missing = False
        offset = 0
        new_loops = []
        for l in loops:
            n = len(l)
            keep = []
            for i in range(n):
                keep.append(l[i])
                a, b = offset + i, offset + (i + 1) % n
                if (min(a, b), max(a, b)) not in edge_set:
                    keep.append(0.5 * (l[i] + l[(i + 1) % n]))
                    missing = True
            new_loops.append(np.array(keep))
            offset += n
        if not missing:
            return allp, simp, loops
        loops = new_loops
    raise MeshError("boundary recovery did not converge")


def _keep_interior(allp, simp, loops, outer_idx):
    cen = allp[simp].mean(axis=1)
    keep = points_in_polygon(cen, loops[outer_idx])
    for i, l in enumerate(loops):
        if i != outer_idx:
            keep &= ~points_in_polygon(cen, l)
    simp = simp[keep]
    used = np.unique(simp)
    remap = -np.ones(len(allp), dtype=int)
    remap[used] = np.arange(len(used))
    return allp[used], remap[simp], remap


def _finish(pts, tris, loops, loop_tags, remap) -> TriMesh:
    area, _ = triangle_geometry(pts, tris)
    tris = np.where((area < 0)[:, None], tris[:, [0, 2, 1]], tris)
    area = np.abs(area)
    if np.any(area <= 1e-14 * area.max()):
        raise MeshError("degenerate triangle produced")
    # boundary edges: those used by exactly one triangle
    e = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    owner = -np.ones(len(pts), dtype=int)
    offset = 0
    for i, l in enumerate(loops):
        ids = remap[offset:offset + len(l)]
        owner[ids[ids >= 0]] = i
        offset += len(l)
    tags = []
    for a, b in bnd:
        oa, ob = owner[a], owner[b]
        if oa < 0 or oa != ob:
            raise MeshError("boundary edge not on a declared loop")
        tags.append(loop_tags[oa])
    return TriMesh(pts, tris.astype(int), bnd.astype(int), tuple(tags))


def _filter_points(cand: np.ndarray, keep_away: np.ndarray, min_dist: np.ndarray | float) -> np.ndarray:
    if len(cand) == 0 or len(keep_away) == 0:
        return cand
    d, _ = cKDTree(keep_away).query(cand)
    return cand[d >= min_dist]


def mesh_plate(domain: PlateDomain, target_size: float, grade_near_anchors: bool = True,
               holes: list | None = None, include_anchors: bool = True) -> TriMesh:
    """Triangulate the plate cross-section.

    holes: optional list of (center, Shape, scale) triples cut out of the plate
    (perforated-plate variant); hole loops are tagged hole_1, hole_2, ...
    """
    size = float(target_size)
    if not size > 0:
        raise MeshError("target_size must be positive")
    bad = domain.shape_violations("plate")
    if bad:
        raise MeshError("; ".join(bad))
    outer = _sample_loop(domain, size)
    loops, tags = [outer], ["outer"]
    P = domain.anchor_array
    hole_radius = np.zeros(len(P))
    fine = size / GRADING_DEPTH
    for k, (center, shape, scale) in enumerate(holes or []):
        hr = shape.circumradius() * scale
        hole_radius[k] = hr
        loops.append(_sample_loop(shape, min(fine, 2 * np.pi * hr / 12), center, scale))
        tags.append(f"hole_{k + 1}")
    extra = []
    excl_r = np.zeros(len(P))
    if grade_near_anchors:
        dist = domain.boundary_distance(P)
        for j, c in enumerate(P):
            radii, sp = _ring_schedule(size, hole_radius[j], fine)
            reach = radii[-1] + size if len(radii) else size
            if reach >= dist[j]:
                raise MeshError(f"anchor {j + 1} too close to the boundary for the requested grading")
            extra.extend(_ring_points(c, radii, sp, even=False))
            excl_r[j] = (radii[-1] if len(radii) else 0.0) + 0.5 * size
    if include_anchors and not holes:
        extra.append(P)
    lo = outer.min(axis=0)
    hi = outer.max(axis=0)
    lat = _hex_lattice(lo, hi, size)
    lat = lat[points_in_polygon(lat, outer)]
    lat = lat[distance_to_polyline(lat, outer) > 0.6 * size]
    for j, c in enumerate(P):
        r = np.linalg.norm(lat - c, axis=1)
        lat = lat[r > max(excl_r[j], 0.5 * size)]
    interior = np.concatenate(extra + [lat]) if extra else lat
    if holes:
        for center, shape, scale in holes:
            interior = interior[~shape.contains((interior - np.asarray(center)) / scale)]
    allp, simp, loops = _triangulate(interior, loops, tags, 0)
    pts, tris, remap = _keep_interior(allp, simp, loops, 0)
    return _finish(pts, tris, loops, tags, remap)


def mesh_symmetric_disk(radius: float, target_size: float) -> TriMesh:
    """Disk mesh invariant under the point reflection y -> -y.

    The upper half-disk is triangulated and its image under the reflection
    supplies the lower half; the diameter nodes are shared.
    """
    R, size = float(radius), float(target_size)
    n_half = max(4, int(np.ceil(np.pi * R / size)))
    t = np.pi * np.arange(n_half + 1) / n_half
    arc = R * np.stack([np.cos(t), np.sin(t)], axis=1)  # from (R,0) to (-R,0)
    n_d = max(2, int(np.ceil(2 * R / size)))
    if n_d % 2:
        n_d += 1
    xd = -R + 2 * R * np.arange(1, n_d) / n_d  # symmetric about 0, includes 0
    diam = np.stack([xd, np.zeros_like(xd)], axis=1)
    loop = np.concatenate([arc, diam])
    lat = _hex_lattice((-R, 0), (R, R), size, origin=(0.0, 0.0))
    lat = lat[(lat[:, 1] > 0.6 * size) & (np.linalg.norm(lat, axis=1) < R - 0.6 * size)]
    allp, simp, loops = _triangulate(lat, [loop], ["outer"], 0)
    pts, tris, _ = _keep_interior(allp, simp, loops, 0)
    area, _ = triangle_geometry(pts, tris)
    tris = np.where((area < 0)[:, None], tris[:, [0, 2, 1]], tris)
    # reflect; diameter points map onto diameter points
    on_axis = np.abs(pts[:, 1]) < 1e-14
    npts = len(pts)
    mirror = np.arange(npts) + npts
    tree = cKDTree(pts[on_axis])
    ax_ids = np.nonzero(on_axis)[0]
    d, k = tree.query(-pts[on_axis])
    if np.any(d > 1e-12):
        raise MeshError("diameter nodes are not symmetric")
    mirror[on_axis] = ax_ids[k]
    lower_pts = -pts[~on_axis]
    new_index = np.full(npts, -1)
    new_index[~on_axis] = npts + np.arange(np.count_nonzero(~on_axis))
    mirror = np.where(on_axis, mirror, new_index)
    all_pts = np.concatenate([pts, lower_pts])
    all_tris = np.concatenate([tris, mirror[tris]])  # point reflection keeps orientation
    # boundary: all edges used once
    e = np.sort(np.concatenate([all_tris[:, [0, 1]], all_tris[:, [1, 2]], all_tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    return TriMesh(all_pts, all_tris, bnd, tuple("outer" for _ in bnd))
