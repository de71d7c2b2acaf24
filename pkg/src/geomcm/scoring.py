"""Spatial proximity, combined score, and rectangle distance bounds.

Point distances are always computed as ``sqrt(dx*dx + dy*dy)`` (never
``hypot``) so the scalar path used by the index and the vectorized path used
by the linear scan agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import GeoPoint


class Mbr(NamedTuple):
    minx: float
    miny: float
    maxx: float
    maxy: float

    @classmethod
    def of_point(cls, p) -> "Mbr":
        return cls(p[0], p[1], p[0], p[1])

    @classmethod
    def of_points(cls, xy: np.ndarray) -> "Mbr":
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @property
    def min(self) -> GeoPoint:
        return GeoPoint(self.minx, self.miny)

    @property
    def max(self) -> GeoPoint:
        return GeoPoint(self.maxx, self.maxy)

    @property
    def is_valid(self) -> bool:
        return self.minx <= self.maxx and self.miny <= self.maxy

    def area(self) -> float:
        return (self.maxx - self.minx) * (self.maxy - self.miny)

    def union(self, other: "Mbr") -> "Mbr":
        return Mbr(
            min(self.minx, other.minx), min(self.miny, other.miny),
            max(self.maxx, other.maxx), max(self.maxy, other.maxy),
        )

    def contains(self, other: "Mbr") -> bool:
        return (self.minx <= other.minx and self.miny <= other.miny
                and self.maxx >= other.maxx and self.maxy >= other.maxy)

    def contains_point(self, p) -> bool:
        return self.minx <= p[0] <= self.maxx and self.miny <= p[1] <= self.maxy

    def corners(self):
        return (
            GeoPoint(self.minx, self.miny), GeoPoint(self.minx, self.maxy),
            GeoPoint(self.maxx, self.miny), GeoPoint(self.maxx, self.maxy),
        )


def union_all(boxes) -> Mbr:
    it = iter(boxes)
    minx, miny, maxx, maxy = next(it)
    for b in it:
        if b[0] < minx:
            minx = b[0]
        if b[1] < miny:
            miny = b[1]
        if b[2] > maxx:
            maxx = b[2]
        if b[3] > maxy:
            maxy = b[3]
    return Mbr(minx, miny, maxx, maxy)


@dataclass(frozen=True)
class ScoringContext:
    """Per-query normalization: the distance that maps to proximity 0, and mu.

    ``delta_max == 0`` is allowed and means every object is co-located with
    the query, so proximity is 1 everywhere.
    """

    delta_max: float
    mu: float

    def __post_init__(self):
        if not (self.delta_max >= 0.0 and math.isfinite(self.delta_max)):
            raise ValueError(f"delta_max must be finite and >= 0, got {self.delta_max}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")


def euclidean(a, b) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return math.sqrt(dx * dx + dy * dy)


def euclidean_many(q, xy: np.ndarray) -> np.ndarray:
    dx = xy[:, 0] - q[0]
    dy = xy[:, 1] - q[1]
    return np.sqrt(dx * dx + dy * dy)


def delta_max_upper_bound(q, root: Mbr) -> float:
    """Farthest corner of the root box; bounds the distance to every indexed object."""
    return max(euclidean(q, c) for c in Mbr(*root).corners())


def delta_max_exact(q, xy: np.ndarray) -> float:
    if len(xy) == 0:
        raise ValueError("delta_max of an empty object set")
    return float(euclidean_many(q, xy).max())


def distance_proximity(delta: float, ctx: ScoringContext) -> float:
    if delta < 0.0 or delta > ctx.delta_max:
        raise ValueError(f"distance {delta} outside [0, delta_max={ctx.delta_max}]")
    if ctx.delta_max == 0.0:
        return 1.0
    return 1.0 - delta / ctx.delta_max


def distance_proximity_many(delta: np.ndarray, ctx: ScoringContext) -> np.ndarray:
    if ctx.delta_max == 0.0:
        return np.ones_like(delta)
    return 1.0 - delta / ctx.delta_max


def combined_score(dst: float, sim: float, mu: float) -> float:
    return mu * dst + (1.0 - mu) * sim


def min_dist_to_mbr(q, box) -> float:
    minx, miny, maxx, maxy = box
    x, y = q[0], q[1]
    dx = minx - x if x < minx else (x - maxx if x > maxx else 0.0)
    dy = miny - y if y < miny else (y - maxy if y > maxy else 0.0)
    return math.sqrt(dx * dx + dy * dy)


def max_dist_to_mbr(q, box) -> float:
    minx, miny, maxx, maxy = box
    x, y = q[0], q[1]
    dx = max(x - minx, maxx - x)
    dy = max(y - miny, maxy - y)
    return math.sqrt(dx * dx + dy * dy)


def score_upper_bound_for_node(q, box, ctx: ScoringContext) -> float:
    """Largest combined score any object inside ``box`` can reach (similarity capped at 1)."""
    d = min_dist_to_mbr(q, box)
    if d > ctx.delta_max:
        d = ctx.delta_max
    return combined_score(distance_proximity(d, ctx), 1.0, ctx.mu)
