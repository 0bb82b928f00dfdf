"""Quintic radial cutoffs shared by state profiles and symbol cutoffs.

The smoothstep 6t^5 - 15t^4 + 10t^3 interpolates 0 -> 1 with two vanishing
derivatives at both ends, so every profile built here is C^2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


@dataclass(frozen=True)
class RadialCutoff:
    """Radial profile: 1 for r <= plateau, 0 for r >= support, quintic between."""

    plateau: float = 0.5
    support: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.plateau < self.support:
            raise ValueError("needs 0 < plateau < support")

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        t = (self.support - r) / (self.support - self.plateau)
        return smoothstep(t)

    def of_vector(self, points):
        """Evaluate at Euclidean norms of points with shape (..., d)."""
        pts = np.asarray(points, dtype=float)
        return self(np.sqrt(np.sum(pts * pts, axis=-1)))
