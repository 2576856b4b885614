"""Random bar systems: connected stick structures rasterized onto the grid.

A bar is a segment with a half-width; its footprint is the capsule of
points within that distance of the segment. Systems are built as a chain
from the support anchor to the load anchor (plus optional branches hung on
existing joints), so every sample is connected between its anchors by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .fields import DensityField
from .mesh import GridMesh


@dataclass(frozen=True)
class Bar:
    """Segment from p0 to p1 with capsule half-width ``width`` (element units)."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise InputError(f"bar width must be positive, got {self.width}")


@dataclass(frozen=True)
class BarSystem:
    """A set of bars plus the two anchor points they are meant to connect."""

    bars: tuple[Bar, ...]
    support_point: tuple[float, float]
    load_point: tuple[float, float]

    def joints(self) -> list[tuple[float, float]]:
        pts = {self.support_point, self.load_point}
        for bar in self.bars:
            pts.add(bar.p0)
            pts.add(bar.p1)
        return sorted(pts)

    def connects_anchors(self) -> bool:
        """BFS over the joint graph (bars are edges, shared endpoints are nodes)."""
        adjacency: dict[tuple[float, float], set[tuple[float, float]]] = {}
        for bar in self.bars:
            adjacency.setdefault(bar.p0, set()).add(bar.p1)
            adjacency.setdefault(bar.p1, set()).add(bar.p0)
        if self.support_point not in adjacency:
            return False
        seen = {self.support_point}
        queue = [self.support_point]
        while queue:
            node = queue.pop()
            if node == self.load_point:
                return True
            for nxt in adjacency.get(node, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return False


def _random_interior_point(rng: np.random.Generator, mesh: GridMesh,
                           margin: float = 0.5) -> tuple[float, float]:
    x = rng.uniform(margin, mesh.nelx - margin)
    y = rng.uniform(margin, mesh.nely - margin)
    return float(x), float(y)


def sample_bar_system(rng: np.random.Generator, mesh: GridMesh,
                      support_point: tuple[float, float],
                      load_point: tuple[float, float],
                      n_bars_range: tuple[int, int],
                      width_range: tuple[float, float]) -> BarSystem:
    """Draw a random bar system whose joint graph links support to load.

    ``n`` bars are drawn from ``n_bars_range``; a random-length chain of them
    walks from the support anchor through random waypoints and is forced to
    end at the load anchor, and the remaining bars branch off existing
    joints toward random points.
    """
    lo, hi = n_bars_range
    if not 1 <= lo <= hi:
        raise InputError(f"n_bars_range must satisfy 1 <= lo <= hi, got {n_bars_range}")
    w_lo, w_hi = width_range
    if not 0 < w_lo <= w_hi:
        raise InputError(f"width_range must satisfy 0 < lo <= hi, got {width_range}")
    n = int(rng.integers(lo, hi + 1))
    n_chain = int(rng.integers(1, n + 1))

    waypoints = [support_point]
    waypoints += [_random_interior_point(rng, mesh) for _ in range(n_chain - 1)]
    waypoints.append(load_point)
    bars = [
        Bar(waypoints[i], waypoints[i + 1], float(rng.uniform(w_lo, w_hi)))
        for i in range(n_chain)
    ]
    joints = list(waypoints)
    for _ in range(n - n_chain):
        start = joints[int(rng.integers(len(joints)))]
        end = _random_interior_point(rng, mesh)
        bars.append(Bar(start, end, float(rng.uniform(w_lo, w_hi))))
        joints.append(end)
    return BarSystem(tuple(bars), support_point, load_point)


def _segment_distances(cx: np.ndarray, cy: np.ndarray, bar: Bar) -> np.ndarray:
    """Distance of every centroid to the bar's spine segment."""
    (x0, y0), (x1, y1) = bar.p0, bar.p1
    dx, dy = x1 - x0, y1 - y0
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        return np.hypot(cx - x0, cy - y0)
    t = np.clip(((cx - x0) * dx + (cy - y0) * dy) / seg_len2, 0.0, 1.0)
    return np.hypot(cx - (x0 + t * dx), cy - (y0 + t * dy))


def rasterize(system: BarSystem, mesh: GridMesh) -> DensityField:
    """Material wherever an element centroid lies within a bar's capsule."""
    cx, cy = mesh.element_centroids()
    mask = np.zeros((mesh.nely, mesh.nelx), dtype=bool)
    for bar in system.bars:
        mask |= _segment_distances(cx, cy, bar) <= bar.width
    return DensityField(mask.astype(np.float64), binary=True)
