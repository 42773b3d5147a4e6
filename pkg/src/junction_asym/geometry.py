"""Declarative description of a plate-and-rods junction and its validation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


def polygon_area(vertices) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points, vertices) -> np.ndarray:
    """Even-odd ray casting; points exactly on an edge may go either way."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    x, y = p[:, 0][:, None], p[:, 1][:, None]
    x0, y0 = v[:, 0][None, :], v[:, 1][None, :]
    x1, y1 = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]
    straddle = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    crossings = straddle & (x < xc)
    return (np.count_nonzero(crossings, axis=1) % 2) == 1


def distance_to_polyline(points, vertices, closed: bool = True) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    a = v if closed else v[:-1]
    b = np.roll(v, -1, axis=0) if closed else v[1:]
    ab = b - a
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nkd,kd->nk", ap, ab) / np.einsum("kd,kd->k", ab, ab), 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - proj, axis=2).min(axis=1)


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


def polygon_is_simple(vertices) -> bool:
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    if n < 3:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return abs(polygon_area(v)) > 1e-14


@dataclass(frozen=True)
class Shape:
    """A disk centred at the origin or a simple polygon."""

    kind: str
    radius: float | None = None
    vertices: tuple | None = None

    @property
    def is_disk(self) -> bool:
        return self.kind == "disk"

    def area(self) -> float:
        if self.is_disk:
            return float(np.pi * self.radius**2)
        return abs(polygon_area(self.vertices))

    def circumradius(self) -> float:
        """Largest distance from the origin to the shape."""
        if self.is_disk:
            return float(self.radius)
        return float(np.max(np.linalg.norm(np.asarray(self.vertices, float), axis=1)))

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_disk:
            return np.linalg.norm(p, axis=1) < self.radius
        return points_in_polygon(p, self.vertices)

    def boundary_distance(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_disk:
            return np.abs(self.radius - np.linalg.norm(p, axis=1))
        return distance_to_polyline(p, self.vertices)

    def shape_violations(self, label: str) -> list[str]:
        out = []
        if self.kind not in ("disk", "polygon"):
            out.append(f"{label}: unknown kind {self.kind!r}")
        elif self.is_disk:
            if self.radius is None or not self.radius > 0:
                out.append(f"{label}: disk radius must be positive")
        else:
            v = self.vertices
            if v is None or len(v) < 3:
                out.append(f"{label}: polygon needs at least 3 vertices")
            elif not polygon_is_simple(v):
                out.append(f"{label}: polygon is not simple")
            elif polygon_area(v) <= 0:
                out.append(f"{label}: polygon is not positively oriented")
        return out


@dataclass(frozen=True)
class CrossSection(Shape):
    """Rod cross-section (in stretched coordinates), conductivity and length."""

    gamma: float = 1.0
    length: float = 1.0

    def violations(self, j: int) -> list[str]:
        label = f"rod {j}"
        out = self.shape_violations(label)
        if not out and not self.is_disk and not bool(self.contains([[0.0, 0.0]])[0]):
            out.append(f"{label}: cross-section does not contain the origin")
        if not self.length > 0:
            out.append(f"{label}: length must be positive")
        if not self.gamma > 0:
            out.append(f"{label}: gamma must be positive")
        return out


@dataclass(frozen=True)
class PlateDomain(Shape):
    anchors: tuple = ()
    cutoff_radius: float | None = None
    lateral_bc: str = "neumann"

    @property
    def anchor_array(self) -> np.ndarray:
        return np.asarray(self.anchors, dtype=float).reshape(-1, 2)

    def default_cutoff_radius(self) -> float:
        """Half of min(distance to the boundary, half the smallest anchor separation)."""
        P = self.anchor_array
        cand = list(self.boundary_distance(P))
        for j in range(len(P)):
            for k in range(j + 1, len(P)):
                cand.append(0.5 * float(np.linalg.norm(P[j] - P[k])))
        return 0.5 * float(min(cand))

    @property
    def R0(self) -> float:
        return float(self.cutoff_radius) if self.cutoff_radius else self.default_cutoff_radius()

    def violations(self) -> list[str]:
        out = self.shape_violations("plate")
        if out:
            return out
        if self.lateral_bc not in ("neumann", "dirichlet"):
            out.append(f"plate: unknown lateral_bc {self.lateral_bc!r}")
        P = self.anchor_array
        if len(P) == 0:
            out.append("plate: at least one anchor is required")
            return out
        inside = self.contains(P)
        dist = self.boundary_distance(P)
        for j in range(len(P)):
            if not inside[j]:
                out.append(f"anchor {j + 1} is not interior to the plate")
            for k in range(j + 1, len(P)):
                if np.linalg.norm(P[j] - P[k]) < 1e-12:
                    out.append(f"anchors {j + 1} and {k + 1} coincide")
        if out:
            return out
        R0 = self.R0
        for j in range(len(P)):
            if dist[j] <= R0:
                out.append(f"anchor ball {j + 1} not contained in the plate")
            for k in range(j + 1, len(P)):
                if np.linalg.norm(P[j] - P[k]) < 2 * R0:
                    out.append(f"anchor balls overlap ({j + 1}, {k + 1})")
        return out


@dataclass(frozen=True)
class JunctionConfig:
    plate: PlateDomain
    rods: tuple
    alpha: int = 1
    h: float = 0.05
    h0: float | None = None
    raw: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def J(self) -> int:
        return len(self.rods)

    def with_h(self, h: float) -> "JunctionConfig":
        return JunctionConfig(self.plate, self.rods, self.alpha, float(h), self.h0, self.raw)

    def scaled_section_boundary(self, j: int, n: int = 256) -> np.ndarray:
        """Boundary points of the scaled cross-section of rod j (0-based) around its anchor."""
        rod = self.rods[j]
        P = self.plate.anchor_array[j]
        if rod.is_disk:
            t = np.linspace(0, 2 * np.pi, n, endpoint=False)
            pts = rod.radius * np.stack([np.cos(t), np.sin(t)], axis=1)
        else:
            pts = np.asarray(rod.vertices, dtype=float)
        return P + self.h * pts


def validate_config(cfg: JunctionConfig) -> list[str]:
    """List every violated invariant; empty means the configuration is admissible."""
    out: list[str] = []
    if cfg.alpha not in (0, 1):
        out.append(f"alpha must be 0 or 1, got {cfg.alpha}")
    if not cfg.h > 0:
        out.append("h must be positive")
    if cfg.h0 is not None and cfg.h > cfg.h0:
        out.append(f"h = {cfg.h} exceeds the admissibility bound h0 = {cfg.h0}")
    if cfg.J < 1:
        out.append("at least one rod is required")
    for j, rod in enumerate(cfg.rods, start=1):
        out.extend(rod.violations(j))
    out.extend(cfg.plate.violations())
    if len(cfg.plate.anchors) != cfg.J:
        out.append(f"{len(cfg.plate.anchors)} anchors given for {cfg.J} rods")
        return out
    if out or not cfg.h > 0:
        return out
    for j, rod in enumerate(cfg.rods):
        P = cfg.plate.anchor_array[j]
        # a cheap sufficient test first, then the exact polygonal test
        if cfg.plate.boundary_distance(P)[0] > cfg.h * rod.circumradius():
            continue
        bnd = cfg.scaled_section_boundary(j)
        ok = bool(np.all(cfg.plate.contains(bnd)))
        if ok and not cfg.plate.is_disk:
            ok = not _any_crossing(bnd, np.asarray(cfg.plate.vertices, float))
        if not ok:
            out.append(f"scaled cross-section {j + 1} not contained in the plate")
    return out


def _any_crossing(a: np.ndarray, b: np.ndarray) -> bool:
    for i in range(len(a)):
        for k in range(len(b)):
            if _segments_intersect(a[i], a[(i + 1) % len(a)], b[k], b[(k + 1) % len(b)]):
                return True
    return False


# ---------------------------------------------------------------- config files

def _shape_kwargs(d: dict) -> dict:
    kind = d.get("kind", "disk")
    if kind == "disk":
        return {"kind": "disk", "radius": float(d.get("radius", 1.0))}
    return {"kind": kind, "vertices": tuple(tuple(map(float, v)) for v in d["vertices"])}


def config_from_dict(d: dict[str, Any]) -> JunctionConfig:
    p = d["plate"]
    plate = PlateDomain(
        **_shape_kwargs(p),
        anchors=tuple(tuple(map(float, a)) for a in p.get("anchors", [[0.0, 0.0]])),
        cutoff_radius=p.get("cutoff_radius"),
        lateral_bc=p.get("lateral_bc", "neumann"),
    )
    rods = tuple(
        CrossSection(**_shape_kwargs(r), gamma=float(r.get("gamma", 1.0)), length=float(r.get("length", 1.0)))
        for r in d["rods"]
    )
    h = d.get("h")
    if h is None:
        h = (d.get("h_sweep") or [0.05])[0]
    return JunctionConfig(plate, rods, int(d.get("alpha", 1)), float(h), d.get("h0"), d)


def load_config(path: str | Path) -> JunctionConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    return config_from_dict(data)


def h_sweep(cfg: JunctionConfig) -> list[float]:
    hs = cfg.raw.get("h_sweep")
    return [float(x) for x in hs] if hs else [cfg.h]


def make_disk_config(
    *,
    plate_radius: float = 1.0,
    anchors: Sequence = ((0.0, 0.0),),
    rod_radius: float | Sequence[float] = 1.0,
    gamma: float | Sequence[float] = 1.0,
    length: float | Sequence[float] = 1.0,
    alpha: int = 1,
    h: float = 0.05,
    lateral_bc: str = "neumann",
    cutoff_radius: float | None = None,
) -> JunctionConfig:
    """Convenience constructor for disk plates with disk rods."""
    J = len(anchors)

    def per_rod(x):
        return list(x) if np.ndim(x) else [x] * J

    rods = tuple(
        CrossSection(kind="disk", radius=float(a), gamma=float(g), length=float(l))
        for a, g, l in zip(per_rod(rod_radius), per_rod(gamma), per_rod(length))
    )
    plate = PlateDomain(kind="disk", radius=float(plate_radius),
                        anchors=tuple(tuple(map(float, a)) for a in anchors),
                        cutoff_radius=cutoff_radius, lateral_bc=lateral_bc)
    return JunctionConfig(plate, rods, alpha, float(h))
