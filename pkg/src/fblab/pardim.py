"""Parabolic-metric geometry of finite space-time point sets and box counting.

Time scales like the square of space: the distance is ``|x - y| + |t - s|^{1/2}``
and box counting uses cells of spatial side δ and temporal side δ².  Box
dimension bounds Hausdorff dimension from above, so a box slope below a
threshold is consistent evidence for a Hausdorff bound, not a proof of it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientRange

DEDUP_TOL = 1e-12
_FLOOR_EPS = 1e-9


class ParPointSet:
    """Finite set of points ``(x, t)``; duplicates within 1e-12 are merged, first occurrence kept."""

    def __init__(self, points: Iterable, dim: int):
        pts = list(points)
        self.dim = int(dim)
        if not pts:
            self.X = np.zeros((0, self.dim))
            self.T = np.zeros(0)
            return
        X = np.array([np.atleast_1d(np.asarray(p[0], dtype=float)) for p in pts])
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatch(f"points must have {self.dim} spatial coordinates")
        T = np.array([float(p[1]) for p in pts])
        key = np.round(np.column_stack([X, T]) / DEDUP_TOL)
        _, first = np.unique(key, axis=0, return_index=True)
        keep = np.sort(first)
        self.X = X[keep]
        self.T = T[keep]

    def __len__(self) -> int:
        return self.T.size

    def __iter__(self):
        for x, t in zip(self.X, self.T):
            yield x, float(t)

    def union(self, other: "ParPointSet") -> "ParPointSet":
        if other.dim != self.dim:
            raise DimensionMismatch("cannot merge sets of different dimension")
        return ParPointSet(list(self) + list(other), self.dim)

    def projection(self) -> np.ndarray:
        """Spatial coordinates, i.e. the image under ``(x, t) -> x``."""
        return self.X.copy()

    def to_list(self) -> list[dict]:
        return [{"x": x.tolist(), "t": float(t)} for x, t in zip(self.X, self.T)]


def par_dist(p, q) -> float:
    """Parabolic distance ``|x - y| + |t - s|^{1/2}`` between ``p = (x, t)`` and ``q = (y, s)``."""
    x = np.atleast_1d(np.asarray(p[0], dtype=float))
    y = np.atleast_1d(np.asarray(q[0], dtype=float))
    if x.shape != y.shape:
        raise DimensionMismatch(f"spatial dimensions differ: {x.size} vs {y.size}")
    return float(np.linalg.norm(x - y) + np.sqrt(abs(float(p[1]) - float(q[1]))))


def _cells(X: np.ndarray, T: np.ndarray, delta: float, with_time: bool = True, shift=None) -> np.ndarray:
    """Integer cell indices; ``shift`` offsets the lattice by a fraction of a cell per axis."""
    s = np.zeros(X.shape[1] + 1) if shift is None else np.asarray(shift, dtype=float)
    cx = np.floor(X / delta + s[:-1] + _FLOOR_EPS).astype(np.int64)
    if not with_time:
        return cx
    ct = np.floor(T / delta**2 + s[-1] + _FLOOR_EPS).astype(np.int64)
    return np.column_stack([cx, ct])


def box_count(pset: ParPointSet, delta: float) -> int:
    """Occupied cells of the origin-anchored lattice with pitch δ in space and δ² in time."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if len(pset) == 0:
        return 0
    return int(np.unique(_cells(pset.X, pset.T, delta), axis=0).shape[0])


def projection_box_count(pset: ParPointSet, delta: float) -> int:
    if len(pset) == 0:
        return 0
    return int(np.unique(_cells(pset.X, pset.T, delta, with_time=False), axis=0).shape[0])


def _half_shifts(n_axes: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 0.5), repeat=n_axes)))


def covering_count(pset: ParPointSet, delta: float, with_time: bool = True) -> int:
    """Fewest occupied cells over the lattices shifted by half a cell along any subset of axes.

    A set lying on a cell boundary of the anchored lattice is counted twice
    there; the minimum over shifts removes that placement artifact.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if len(pset) == 0:
        return 0
    n_axes = pset.dim + (1 if with_time else 0)
    best = None
    for sh in _half_shifts(n_axes):
        full = sh if with_time else np.append(sh, 0.0)
        n = np.unique(_cells(pset.X, pset.T, delta, with_time, full), axis=0).shape[0]
        best = n if best is None else min(best, n)
    return int(best)


@dataclass(frozen=True)
class DimensionEstimate:
    deltas: list
    counts: list
    slope: float
    r2: float
    used: list
    projection_counts: list = field(default_factory=list)
    projection_slope: float = float("nan")
    resolved: bool = True

    def to_dict(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "counts": list(self.counts),
            "slope": self.slope,
            "r2": self.r2,
            "used": list(self.used),
            "projection_counts": list(self.projection_counts),
            "projection_slope": self.projection_slope,
            "resolved": self.resolved,
            "note": "box-counting slope; an upper-bound proxy for the parabolic Hausdorff dimension",
        }


def _fit(deltas: np.ndarray, counts: np.ndarray, used: np.ndarray) -> tuple[float, float]:
    x = np.log(1.0 / deltas[used])
    y = np.log(np.maximum(counts[used], 1))
    if x.size < 2 or np.ptp(x) == 0:
        return 0.0, 1.0
    slope, icept = np.polyfit(x, y, 1)
    pred = slope * x + icept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot
    return float(slope), r2


def _usable(counts: np.ndarray, n_points: int) -> tuple[np.ndarray, bool]:
    """Mask of resolved deltas (descending order): counts below half the sample and still growing."""
    used = counts < n_points / 2.0
    for i in range(1, counts.size):
        if counts[i] < counts[i - 1]:
            used[i] = False
    if used.sum() >= 2:
        return used, True
    return np.ones_like(used), False


def estimate_dimension(pset: ParPointSet, deltas: Sequence[float]) -> DimensionEstimate:
    """Least-squares slope of ``log N(δ)`` against ``log 1/δ`` over the resolved range.

    ``N(δ)`` is the shift-minimized cell count of :func:`covering_count`.
    """
    d = np.sort(np.asarray(list(deltas), dtype=float))[::-1]
    if d.size < 4 or d[0] / d[-1] < 8.0 - 1e-12:
        raise InsufficientRange("need at least 4 deltas spanning a factor of 8")
    counts = np.array([covering_count(pset, float(v)) for v in d])
    pcounts = np.array([covering_count(pset, float(v), with_time=False) for v in d])
    used, resolved = _usable(counts, len(pset))
    slope, r2 = _fit(d, counts, used)
    pused, _ = _usable(pcounts, len(pset))
    pslope, _ = _fit(d, pcounts, pused)
    return DimensionEstimate(d.tolist(), counts.tolist(), slope, r2, used.tolist(),
                             pcounts.tolist(), pslope, resolved)


def dyadic_deltas(delta_max: float, delta_min: float) -> list[float]:
    out = []
    d = delta_max
    while d >= delta_min * (1 - 1e-12):
        out.append(d)
        d /= 2.0
    return out


def resolved_deltas(h: float, tau: float | None = None, delta_max: float = 0.25, min_cells: float = 4.0) -> list[float]:
    """Dyadic deltas from ``delta_max`` down to the smallest scale a sampled set can resolve.

    A set extracted from a grid with spacing ``h`` and time sampling ``tau``
    carries no structure below ``min_cells * h`` in space, and cells whose
    temporal pitch δ² does not exceed ``tau`` only count sampling layers.
    """
    out = []
    d = delta_max
    while d >= min_cells * h * (1 - 1e-12) and (tau is None or d * d > tau * (1 + 1e-12)):
        out.append(d)
        d /= 2.0
    return out


def dwell_time(pset: ParPointSet) -> float | None:
    """Temporal resolution of a set sampled on a time lattice.

    Largest time span over which the set occupies one spatial location in
    consecutive samples (at least one sampling gap).  Such a run is a single
    event the sampling cannot resolve in time.  ``None`` for single-time sets.
    """
    times = np.unique(pset.T)
    if times.size < 2:
        return None
    gap = float(np.min(np.diff(times)))
    span = gap
    keys = np.round(pset.X / DEDUP_TOL).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    for g in np.unique(inverse):
        t = np.sort(pset.T[inverse.reshape(-1) == g])
        start = t[0]
        for a, b in zip(t, t[1:]):
            if b - a > 1.5 * gap:
                start = b
            span = max(span, float(b - start))
    return span
