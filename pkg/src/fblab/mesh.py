"""Structured space-time grids, discrete scalar fields and finite-difference stencils.

A field lives on the cube ``[-L, L]^dim`` (dim 1 or 2) times a uniform list of
time slices.  Values are stored time-major: ``values[k, i]`` in 1D and
``values[k, i, j]`` in 2D, with ``i`` running along the first spatial axis.

Derived quantities (gradients, the heat residual ``Δw - ∂t w`` and the
scaling field ``x·∇w + 2t ∂t w``) are computed lazily one time slice at a
time, so they can be attached to long solver outputs without multiplying the
memory footprint.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridTooSmall, OutOfDomain

_HULL_TOL = 1e-12


def _as_count(span: float, step: float, what: str) -> int:
    ratio = span / step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"{what}: span {span!r} is not an integer multiple of step {step!r}")
    return n


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor grid on ``[-L, L]^dim x [t_begin, t_end]``."""

    dim: int
    spatial_halfwidth: float
    h: float
    dt: float
    t_range: tuple[float, float]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not (self.h > 0 and self.dt > 0 and self.spatial_halfwidth > 0):
            raise ValueError("h, dt and L must be positive")
        t0, t1 = (float(v) for v in self.t_range)
        if not t0 < t1:
            raise ValueError(f"t_begin < t_end required, got {self.t_range}")
        object.__setattr__(self, "t_range", (t0, t1))
        _as_count(2 * self.spatial_halfwidth, self.h, "space")
        _as_count(t1 - t0, self.dt, "time")

    @property
    def L(self) -> float:
        return self.spatial_halfwidth

    @property
    def n_space(self) -> int:
        """Nodes per spatial axis."""
        return _as_count(2 * self.spatial_halfwidth, self.h, "space") + 1

    @property
    def n_time(self) -> int:
        return _as_count(self.t_range[1] - self.t_range[0], self.dt, "time") + 1

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.n_space,) * self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_time,) + self.spatial_shape

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n_space)

    @property
    def times(self) -> np.ndarray:
        return self.t_range[0] + self.dt * np.arange(self.n_time)

    def time(self, k: int) -> float:
        return self.t_range[0] + self.dt * k

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``spatial_shape + (dim,)``."""
        ax = self.axis
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.spatial_shape, dtype=bool)
        for d in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask

    def nearest_time_index(self, t: float) -> int:
        k = int(round((t - self.t_range[0]) / self.dt))
        return min(max(k, 0), self.n_time - 1)

    def contains(self, X: np.ndarray, t) -> bool:
        X = np.atleast_2d(X)
        t = np.asarray(t, dtype=float)
        inside_x = np.all(np.abs(X) <= self.L + _HULL_TOL)
        inside_t = np.all((t >= self.t_range[0] - _HULL_TOL) & (t <= self.t_range[1] + _HULL_TOL))
        return bool(inside_x and inside_t)

    def with_time(self, dt: float, t_range: tuple[float, float]) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.dim, self.spatial_halfwidth, self.h, dt, t_range)


class ScalarField:
    """Discrete function on a :class:`SpaceTimeGrid` with multilinear interpolation."""

    def __init__(self, grid: SpaceTimeGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        self.grid = grid
        self._values = values
        self._values.flags.writeable = False

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, fn: Callable[[np.ndarray, float], np.ndarray]):
        """Sample ``fn(X, t)`` (X of shape ``(N, dim)``) at every node."""
        X = grid.coords().reshape(-1, grid.dim)
        out = np.empty(grid.shape)
        for k, t in enumerate(grid.times):
            out[k] = np.asarray(fn(X, float(t)), dtype=float).reshape(grid.spatial_shape)
        return cls(grid, out)

    def slice(self, k: int) -> np.ndarray:
        return self._values[k]

    @property
    def values(self) -> np.ndarray:
        return self._values

    def evaluate(self, X, t) -> np.ndarray:
        """Interpolate at points ``X`` (shape ``(N, dim)``) and times ``t`` (scalar or ``(N,)``)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.grid.dim)
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return self._evaluate_at_time(X, float(t_arr))
        t_arr = t_arr.reshape(-1)
        if t_arr.shape[0] != X.shape[0]:
            raise ValueError("t must be scalar or match the number of points")
        out = np.empty(X.shape[0])
        for tv in np.unique(t_arr):
            sel = t_arr == tv
            out[sel] = self._evaluate_at_time(X[sel], float(tv))
        return out

    def _evaluate_at_time(self, X: np.ndarray, t: float) -> np.ndarray:
        g = self.grid
        t0, t1 = g.t_range
        if not (t0 - _HULL_TOL <= t <= t1 + _HULL_TOL):
            raise OutOfDomain(f"time {t} outside [{t0}, {t1}]")
        if X.size and np.max(np.abs(X)) > g.L + _HULL_TOL:
            raise OutOfDomain(f"point outside spatial hull [-{g.L}, {g.L}]^{g.dim}")
        tau = (t - t0) / g.dt
        k = min(max(int(math.floor(tau)), 0), g.n_time - 2) if g.n_time > 1 else 0
        theta = tau - k if g.n_time > 1 else 0.0
        theta = min(max(theta, 0.0), 1.0)
        val = _interp_space(self.slice(k), g, X)
        if theta > 0.0:
            upper = _interp_space(self.slice(k + 1), g, X)
            val = (1.0 - theta) * val + theta * upper if theta < 1.0 else upper
        return val


class DerivedField(ScalarField):
    """Field whose slices are produced on demand by ``slice_fn(k)`` and cached."""

    def __init__(self, grid: SpaceTimeGrid, slice_fn: Callable[[int], np.ndarray], cache_size: int = 16):
        self.grid = grid
        self._slice_fn = slice_fn
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    def slice(self, k: int) -> np.ndarray:
        if k < 0:
            k += self.grid.n_time
        with self._lock:
            hit = self._cache.get(k)
            if hit is not None:
                self._cache.move_to_end(k)
                return hit
        arr = np.asarray(self._slice_fn(k), dtype=float)
        arr.flags.writeable = False
        with self._lock:
            self._cache[k] = arr
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return arr

    @property
    def values(self) -> np.ndarray:
        return np.stack([self.slice(k) for k in range(self.grid.n_time)])


class StencilField(DerivedField):
    """A derived finite-difference quantity; NaN marks invalid (boundary) nodes."""


def _interp_space(S: np.ndarray, g: SpaceTimeGrid, X: np.ndarray) -> np.ndarray:
    n = g.n_space
    idx = (X + g.L) / g.h
    i0 = np.clip(np.floor(idx).astype(np.int64), 0, n - 2)
    fr = np.clip(idx - i0, 0.0, 1.0)
    if g.dim == 1:
        i = i0[:, 0]
        f = fr[:, 0]
        a, b = S[i], S[i + 1]
        return np.where(f < 1.0, (1 - f) * a, 0.0) + np.where(f > 0.0, f * b, 0.0)
    i, j = i0[:, 0], i0[:, 1]
    fx, fy = fr[:, 0], fr[:, 1]
    out = np.zeros(X.shape[0])
    for di, wx in ((0, 1 - fx), (1, fx)):
        for dj, wy in ((0, 1 - fy), (1, fy)):
            w = wx * wy
            out += np.where(w > 0.0, w * S[i + di, j + dj], 0.0)
    return out


def eval(field: ScalarField, x: Sequence[float] | float, t: float) -> float:
    """Interpolated value of ``field`` at a single point ``(x, t)``."""
    X = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, field.grid.dim)
    return float(field.evaluate(X, t)[0])


def _require(field: ScalarField, need_time: bool):
    g = field.grid
    if g.n_space < 3:
        raise GridTooSmall(f"need at least 3 nodes per axis, have {g.n_space}")
    if need_time and g.n_time < 2:
        raise GridTooSmall("need at least 2 time slices")


def _d_axis(S: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centered difference inside, first-order one-sided on the two faces."""
    out = np.empty_like(S)
    n = S.shape[axis]

    def sl(a, b):
        idx = [slice(None)] * S.ndim
        idx[axis] = slice(a, b)
        return tuple(idx)

    out[sl(1, n - 1)] = (S[sl(2, n)] - S[sl(0, n - 2)]) / (2 * h)
    out[sl(0, 1)] = (S[sl(1, 2)] - S[sl(0, 1)]) / h
    out[sl(n - 1, n)] = (S[sl(n - 1, n)] - S[sl(n - 2, n - 1)]) / h
    return out


def _laplacian_slice(S: np.ndarray, h: float) -> np.ndarray:
    out = np.full_like(S, np.nan)
    if S.ndim == 1:
        out[1:-1] = (S[2:] - 2 * S[1:-1] + S[:-2]) / h**2
    else:
        out[1:-1, 1:-1] = (
            S[2:, 1:-1] + S[:-2, 1:-1] + S[1:-1, 2:] + S[1:-1, :-2] - 4 * S[1:-1, 1:-1]
        ) / h**2
    return out


def _ring_nan(S: np.ndarray) -> np.ndarray:
    out = np.full_like(S, np.nan)
    inner = tuple(slice(1, -1) for _ in range(S.ndim))
    out[inner] = S[inner]
    return out


def _dt_slice(field: ScalarField, k: int) -> np.ndarray:
    g = field.grid
    n = g.n_time
    if k == 0:
        return (field.slice(1) - field.slice(0)) / g.dt
    if k == n - 1:
        return (field.slice(n - 1) - field.slice(n - 2)) / g.dt
    return (field.slice(k + 1) - field.slice(k - 1)) / (2 * g.dt)


def gradient(field: ScalarField) -> list[StencilField]:
    """Spatial gradient, one :class:`StencilField` per axis."""
    _require(field, need_time=False)
    h = field.grid.h
    return [
        StencilField(field.grid, lambda k, d=d: _d_axis(field.slice(k), d, h))
        for d in range(field.grid.dim)
    ]


def laplacian(field: ScalarField) -> StencilField:
    _require(field, need_time=False)
    return StencilField(field.grid, lambda k: _laplacian_slice(field.slice(k), field.grid.h))


def time_derivative(field: ScalarField) -> StencilField:
    _require(field, need_time=True)
    return StencilField(field.grid, lambda k: _dt_slice(field, k))


def heat_residual(field: ScalarField) -> StencilField:
    """Discrete ``Δw - ∂t w``; the outermost spatial ring is NaN."""
    _require(field, need_time=True)
    h = field.grid.h

    def fn(k):
        return _laplacian_slice(field.slice(k), h) - _dt_slice(field, k)

    return StencilField(field.grid, fn)


def z_field(field: ScalarField, origin: tuple[Sequence[float], float] | None = None) -> StencilField:
    """Discrete ``(x - x0)·∇w + 2 (t - t0) ∂t w`` about ``origin`` (default ``(0, 0)``)."""
    _require(field, need_time=True)
    g = field.grid
    x0 = np.zeros(g.dim) if origin is None else np.asarray(origin[0], dtype=float).reshape(g.dim)
    t0 = 0.0 if origin is None else float(origin[1])
    rel = g.coords() - x0

    def fn(k):
        S = field.slice(k)
        acc = 2.0 * (g.time(k) - t0) * _dt_slice(field, k)
        for d in range(g.dim):
            acc = acc + rel[..., d] * _d_axis(S, d, g.h)
        return _ring_nan(acc)

    return StencilField(g, fn)
