"""Smooth radial and axial cut-off functions built from a quintic blend."""
from __future__ import annotations

import numpy as np


def smoothstep5(t):
    """C^2 blend: 0 for t <= 0, 1 for t >= 1, 10t^3 - 15t^4 + 6t^5 in between."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def smoothstep5_d1(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * tc**2 * (1.0 - tc) ** 2, 0.0)


def smoothstep5_d2(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 60.0 * tc * (1.0 - tc) * (1.0 - 2.0 * tc), 0.0)


class RadialCutoff:
    """Equal to 1 for r <= inner, 0 for r >= outer, quintic in between."""

    def __init__(self, inner: float, outer: float):
        if not 0 <= inner < outer:
            raise ValueError("need 0 <= inner < outer")
        self.inner = float(inner)
        self.outer = float(outer)

    def _t(self, r):
        return (np.asarray(r, dtype=float) - self.inner) / (self.outer - self.inner)

    def __call__(self, r):
        return 1.0 - smoothstep5(self._t(r))

    def d1(self, r):
        return -smoothstep5_d1(self._t(r)) / (self.outer - self.inner)

    def d2(self, r):
        return -smoothstep5_d2(self._t(r)) / (self.outer - self.inner) ** 2


def anchor_cutoff(R0: float) -> RadialCutoff:
    """Cut-off equal to 1 on the ball of radius R0/2 and vanishing outside radius R0."""
    return RadialCutoff(0.5 * R0, R0)


def rod_cutoff(length: float) -> RadialCutoff:
    """Axial cut-off: 1 for z < l/3, 0 for z > 2l/3."""
    return RadialCutoff(length / 3.0, 2.0 * length / 3.0)
