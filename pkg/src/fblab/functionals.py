"""Gaussian-weighted bilinear form and the scale-dependent functionals built on it.

All functionals are evaluated on the time slice ``t = -r²`` of a field
expressed in coordinates centred at the base point.  With the substitution
``x = r y`` the backward heat kernel at ``t = -r²`` becomes the fixed density
``(4π)^{-n/2} e^{-|y|²/4}``, so one tensor Gauss-Hermite rule serves every r:

    <g, h>_r = Σ_j w_j g(r y_j, -r²) h(r y_j, -r²)

Fields passed here must expose ``evaluate(X, t)``; the functionals that need
derivatives also use ``jet(X, t) -> (value, grad, laplacian, time_derivative)``.
Analytic fixtures provide exact jets, grid-backed fields use finite
difference stencils (see :func:`localize`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np

from .errors import DivisionByZero
from .fixtures import PolyP
from .mesh import DerivedField, ScalarField, gradient, laplacian, time_derivative

DEFAULT_Q = 40


# -- quadrature --------------------------------------------------------------------


@dataclass(frozen=True)
class GaussQuad:
    """Tensor Gauss-Hermite rule for the density proportional to ``e^{-|y|²/4}``."""

    dim: int
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def create(cls, dim: int, Q: int = DEFAULT_Q) -> "GaussQuad":
        return _quad(dim, Q)

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values: np.ndarray) -> float:
        # np.sum on a contiguous 1-d array uses pairwise summation in a fixed order
        return float(np.sum(np.ascontiguousarray(self.weights * values)))


@lru_cache(maxsize=None)
def _quad(dim: int, Q: int) -> GaussQuad:
    z, w = np.polynomial.hermite.hermgauss(Q)
    y1 = 2.0 * z
    w1 = w / math.sqrt(math.pi)
    if dim == 1:
        nodes = y1[:, None]
        weights = w1
    else:
        Y1, Y2 = np.meshgrid(y1, y1, indexing="ij")
        W1, W2 = np.meshgrid(w1, w1, indexing="ij")
        nodes = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
        weights = (W1 * W2).ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return GaussQuad(dim, nodes, weights)


# -- cutoff ------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffSpec:
    """Radial bump equal to 1 on ``|x| ≤ r_inner`` and 0 on ``|x| ≥ r_outer``.

    The transition is the quintic ``1 - 10s³ + 15s⁴ - 6s⁵`` in
    ``s = (|x| - r_inner)/(r_outer - r_inner)``, which matches value, slope and
    curvature of both plateaus, so the cutoff is C².
    """

    r_inner: float = 0.25
    r_outer: float = 0.5

    def profile(self, rho):
        """Radial profile and its first two radial derivatives."""
        rho = np.asarray(rho, dtype=float)
        width = self.r_outer - self.r_inner
        s = np.clip((rho - self.r_inner) / width, 0.0, 1.0)
        eta = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
        inside = (rho > self.r_inner) & (rho < self.r_outer)
        d1 = np.where(inside, -30.0 * s**2 * (1.0 - s) ** 2 / width, 0.0)
        d2 = np.where(inside, -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / width**2, 0.0)
        return eta, d1, d2

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.profile(np.linalg.norm(X, axis=1))[0]

    def jet(self, X):
        """Value, gradient and Laplacian of the cutoff at points ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[1]
        rho = np.linalg.norm(X, axis=1)
        eta, d1, d2 = self.profile(rho)
        safe = np.where(rho > 0, rho, 1.0)
        grad = (d1 / safe)[:, None] * X
        lap = d2 + (n - 1) * d1 / safe
        return eta, grad, lap


# -- field adapters ----------------------------------------------------------------


def _values(g, X, t) -> np.ndarray:
    if hasattr(g, "evaluate"):
        return np.asarray(g.evaluate(X, t), dtype=float).reshape(-1)
    return np.broadcast_to(np.asarray(g(X, t), dtype=float), (X.shape[0],))


class GridJet:
    """Stencil-based jet of a grid field, queried relative to ``origin = (x0, t0)``."""

    def __init__(self, field: ScalarField, origin=None):
        self.field = field
        self.dim = field.grid.dim
        if origin is None:
            self.x0, self.t0 = np.zeros(self.dim), 0.0
        else:
            self.x0 = np.asarray(origin[0], dtype=float).reshape(self.dim)
            self.t0 = float(origin[1])
        self._grad = gradient(field)
        self._lap = laplacian(field)
        self._dt = time_derivative(field)

    def evaluate(self, X, t) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        return self.field.evaluate(X + self.x0, t + self.t0)

    def jet(self, X, t: float):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        Xa, ta = X + self.x0, t + self.t0
        v = self.field.evaluate(Xa, ta)
        g = np.stack([gd.evaluate(Xa, ta) for gd in self._grad], axis=1)
        return v, g, self._lap.evaluate(Xa, ta), self._dt.evaluate(Xa, ta)


class ShiftedJet:
    """Jet of ``(x, t) -> F(x0 + x, t0 + t) - p(x)`` for an analytic field ``F``."""

    def __init__(self, source, origin=None, p: PolyP | None = None):
        self.source = source
        self.dim = source.dim
        self.x0 = np.zeros(self.dim) if origin is None else np.asarray(origin[0], dtype=float).reshape(self.dim)
        self.t0 = 0.0 if origin is None else float(origin[1])
        self.p = p

    def evaluate(self, X, t) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        v = self.source.evaluate(X + self.x0, np.asarray(t) + self.t0)
        return v if self.p is None else v - self.p(X)

    def jet(self, X, t: float):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        v, g, lap, dtv = self.source.jet(X + self.x0, t + self.t0)
        if self.p is not None:
            v = v - self.p(X)
            g = g - self.p.grad(X)
            lap = lap - self.p.f0
        return v, g, lap, dtv


class CutoffField:
    """Product ``w·ζ``, identically zero (and never evaluating ``w``) where ``ζ = 0``."""

    def __init__(self, inner, zeta: CutoffSpec | None = None):
        self.inner = inner
        self.zeta = zeta or CutoffSpec()
        self.dim = inner.dim

    def _support(self, X):
        return np.linalg.norm(X, axis=1) < self.zeta.r_outer

    def evaluate(self, X, t) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        out = np.zeros(X.shape[0])
        sel = self._support(X)
        if np.any(sel):
            t_arr = np.asarray(t, dtype=float)
            ts = t_arr if t_arr.ndim == 0 else t_arr.reshape(-1)[sel]
            out[sel] = _values(self.inner, X[sel], ts) * self.zeta(X[sel])
        return out

    def jet(self, X, t: float):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        n = X.shape[0]
        v = np.zeros(n)
        g = np.zeros((n, self.dim))
        lap = np.zeros(n)
        dtv = np.zeros(n)
        sel = self._support(X)
        if np.any(sel):
            wv, wg, wl, wt = self.inner.jet(X[sel], t)
            z, zg, zl = self.zeta.jet(X[sel])
            v[sel] = wv * z
            g[sel] = wg * z[:, None] + wv[:, None] * zg
            lap[sel] = wl * z + 2.0 * np.sum(wg * zg, axis=1) + wv * zl
            dtv[sel] = wt * z
        return v, g, lap, dtv


def apply_cutoff(w, zeta: CutoffSpec | None = None) -> CutoffField:
    """``w·ζ`` extended by zero outside the support of ``ζ``."""
    return CutoffField(w, zeta)


def localize(field, x0, t0: float, p: PolyP | None = None, cutoff: bool = True):
    """``w(x, t) = (u(x0 + x, t0 + t) - p(x))·ζ(x)`` for an analytic or grid-backed ``u``.

    For grid-backed ``u`` the polynomial is subtracted at the nodes before any
    interpolation or differencing, so the quadratic part of ``u`` does not
    contribute interpolation error.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(field, ScalarField):
        g = field.grid
        if p is None:
            base = field
        else:
            shift = p(g.coords().reshape(-1, g.dim) - x0).reshape(g.spatial_shape)
            base = DerivedField(g, lambda k: field.slice(k) - shift)
        w = GridJet(base, (x0, t0))
    else:
        w = ShiftedJet(field, (x0, t0), p)
    return apply_cutoff(w) if cutoff else w


# -- functionals -------------------------------------------------------------------


def _quad_for(w, quad: GaussQuad | None) -> GaussQuad:
    if quad is not None:
        return quad
    return GaussQuad.create(getattr(w, "dim", 1))


def weighted_inner(g, h, r: float, quad: GaussQuad | None = None) -> float:
    """Gaussian-weighted inner product on the slice ``t = -r²``."""
    if r <= 0:
        raise ValueError("r must be positive")
    quad = quad or GaussQuad.create(getattr(g, "dim", getattr(h, "dim", 1)))
    X = r * quad.nodes
    t = -r * r
    return quad.integrate(_values(g, X, t) * _values(h, X, t))


def functional_H(w, r: float, quad: GaussQuad | None = None) -> float:
    """Gaussian mass ``<w, w>_r``."""
    return weighted_inner(w, w, r, _quad_for(w, quad))


def functional_D(w, r: float, quad: GaussQuad | None = None) -> float:
    """Gaussian Dirichlet energy ``2r² <∇w, ∇w>_r``."""
    quad = _quad_for(w, quad)
    _, g, _, _ = w.jet(r * quad.nodes, -r * r)
    return 2.0 * r * r * quad.integrate(np.sum(g * g, axis=1))


def frequency(w, r: float, quad: GaussQuad | None = None) -> float:
    H = functional_H(w, r, quad)
    if H == 0.0:
        raise DivisionByZero(f"H(r, w) = 0 at r = {r}")
    return functional_D(w, r, quad) / H


def truncated_ratio(H: float, D: float, r: float, gamma: float) -> float:
    rg = r ** (2.0 * gamma)
    return (D + gamma * rg) / (H + rg)


def frequency_trunc(w, r: float, gamma: float, quad: GaussQuad | None = None) -> float:
    """Frequency capped at ``gamma``: ``(D + γ r^{2γ}) / (H + r^{2γ})``."""
    return truncated_ratio(functional_H(w, r, quad), functional_D(w, r, quad), r, gamma)


def weiss(w, r: float, quad: GaussQuad | None = None) -> float:
    return (functional_D(w, r, quad) - 2.0 * functional_H(w, r, quad)) / r**4


def monneau(w, r: float, quad: GaussQuad | None = None) -> float:
    return functional_H(w, r, quad) / r**4


@dataclass(frozen=True)
class FunctionalSample:
    r: float
    H: float
    D: float
    W: float
    phi: float
    phi_gamma: float
    ip_w_Hw: float
    ip_Zw_Hw: float

    def to_dict(self) -> dict:
        return asdict(self)


def _raw(w, r: float, quad: GaussQuad):
    """Quadrature sums of everything needed at radius ``r`` from one jet evaluation."""
    X = r * quad.nodes
    t = -r * r
    v, g, lap, dtv = w.jet(X, t)
    zw = np.sum(X * g, axis=1) + 2.0 * t * dtv
    hw = lap - dtv
    return {
        "H": quad.integrate(v * v),
        "D": 2.0 * r * r * quad.integrate(np.sum(g * g, axis=1)),
        "w_Zw": quad.integrate(v * zw),
        "Zw_Zw": quad.integrate(zw * zw),
        "w_Hw": quad.integrate(v * hw),
        "Zw_Hw": quad.integrate(zw * hw),
    }


def sample(w, r: float, gamma: float, quad: GaussQuad | None = None) -> FunctionalSample:
    """All scalar functionals of ``w`` at radius ``r``."""
    quad = _quad_for(w, quad)
    s = _raw(w, r, quad)
    H, D = s["H"], s["D"]
    return FunctionalSample(
        r=float(r),
        H=H,
        D=D,
        W=(D - 2.0 * H) / r**4,
        phi=D / H if H > 0 else float("nan"),
        phi_gamma=truncated_ratio(H, D, r, gamma),
        ip_w_Hw=s["w_Hw"],
        ip_Zw_Hw=s["Zw_Hw"],
    )


@dataclass(frozen=True)
class IdentityReport:
    """Residuals of the three derivative identities at one radius."""

    r: float
    dr: float
    dH_fd: float
    dH_formula: float
    D: float
    D_formula: float
    dD_fd: float
    dD_formula: float

    @property
    def residuals(self) -> tuple[float, float, float]:
        return (abs(self.dH_fd - self.dH_formula), abs(self.D - self.D_formula), abs(self.dD_fd - self.dD_formula))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residuals"] = list(self.residuals)
        return d


def verify_derivative_identities(w, r: float, dr: float = 1e-3, quad: GaussQuad | None = None) -> IdentityReport:
    """Compare centered differences in r of H and D with their closed-form derivatives.

    H' = (2/r) <w, Zw>,   D = <w, Zw> - 2r² <w, 𝐇w>,   D' = (2/r) <Zw, Zw> - 4r <Zw, 𝐇w>.
    """
    if not 0 < 2 * dr < r:
        raise ValueError("need 0 < 2 dr < r")
    quad = _quad_for(w, quad)
    s = {k: _raw(w, r + k * dr, quad) for k in (-2, -1, 0, 1, 2)}
    mid = s[0]

    def d_dr(key):
        # five-point centered difference, O(dr⁴)
        return (s[-2][key] - 8 * s[-1][key] + 8 * s[1][key] - s[2][key]) / (12 * dr)

    return IdentityReport(
        r=r,
        dr=dr,
        dH_fd=d_dr("H"),
        dH_formula=2.0 / r * mid["w_Zw"],
        D=mid["D"],
        D_formula=mid["w_Zw"] - 2.0 * r * r * mid["w_Hw"],
        dD_fd=d_dr("D"),
        dD_formula=2.0 / r * mid["Zw_Zw"] - 4.0 * r * mid["Zw_Hw"],
    )
