"""Closed-form solutions and quadratic polynomial families used as oracles.

Every fixture can be wrapped as an :class:`AnalyticField`, which exposes the
value together with its exact spatial gradient, Laplacian and time derivative.
Analytic fields and grid-backed fields share the ``evaluate(X, t)`` and
``jet(X, t)`` interface consumed by the functionals and blow-up code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidPolynomial

TRACE_TOL = 1e-12


def _points(X, dim: int) -> np.ndarray:
    return np.asarray(X, dtype=float).reshape(-1, dim)


# -- traveling wave -----------------------------------------------------------


def traveling_wave(x, t):
    """One-phase Stefan traveling wave ``e^s - s - 1`` for ``s = x + t > 0``, else 0."""
    s = np.asarray(x, dtype=float) + np.asarray(t, dtype=float)
    pos = s > 0
    sp = np.where(pos, s, 0.0)
    out = np.where(pos, np.expm1(sp) - sp, 0.0)
    return float(out) if out.ndim == 0 else out


# -- polynomial family ----------------------------------------------------------


@dataclass(frozen=True)
class PolyP:
    """Nonnegative 2-homogeneous polynomial ``x -> ½ xᵀAx`` with ``tr A = f0``."""

    A: np.ndarray
    f0: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise InvalidPolynomial(f"A must be square, got shape {A.shape}")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise InvalidPolynomial("A must be symmetric")
        A = 0.5 * (A + A.T)
        if abs(np.trace(A) - self.f0) > TRACE_TOL * max(1.0, abs(self.f0)):
            raise InvalidPolynomial(f"tr A = {np.trace(A)!r} differs from f0 = {self.f0!r}")
        if self.f0 <= 0:
            raise InvalidPolynomial("f0 must be positive")
        eig = np.linalg.eigvalsh(A)
        if eig[0] < -1e-12 * max(1.0, self.f0):
            raise InvalidPolynomial(f"A is not positive semidefinite (min eigenvalue {eig[0]:.3e})")
        A.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "f0", float(self.f0))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_matrix(cls, A) -> "PolyP":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(A, float(np.trace(A)))

    def __call__(self, X) -> np.ndarray:
        X = _points(X, self.dim)
        return 0.5 * np.einsum("ni,ij,nj->n", X, self.A, X)

    def grad(self, X) -> np.ndarray:
        return _points(X, self.dim) @ self.A

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "f0": self.f0}


def poly_p(A, x) -> float:
    """Evaluate ``½ xᵀAx`` after validating ``A`` as a member of the family."""
    p = PolyP.from_matrix(A)
    return float(p(np.asarray(x, dtype=float))[0])


def halfspace(f0: float, e, x):
    """Regular blow-up profile ``(f0/2) max(e·x, 0)²``."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise ValueError("e must be a unit vector")
    X = _points(x, e.size)
    out = 0.5 * f0 * np.maximum(X @ e, 0.0) ** 2
    return float(out[0]) if np.ndim(x) <= 1 and out.size == 1 else out


def stratum_of(p: PolyP, tol_eig: float = 1e-6) -> int:
    """Dimension of the zero set of ``p``: eigenvalues of A at most ``tol_eig·tr A``."""
    eig = np.linalg.eigvalsh(p.A)
    return int(np.sum(eig <= tol_eig * p.f0))


def random_polyp(rng: np.random.Generator, dim: int, f0: float = 1.0) -> PolyP:
    """Random member of the family: random rotation of a random nonnegative spectrum."""
    lam = rng.random(dim)
    lam = f0 * lam / lam.sum()
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    A = Q @ np.diag(lam) @ Q.T
    A = 0.5 * (A + A.T)
    A += (f0 - np.trace(A)) / dim * np.eye(dim)
    return PolyP(A, f0)


# -- analytic fields ------------------------------------------------------------


@dataclass
class AnalyticField:
    """Closed-form field with exact derivatives.

    Each callable takes ``X`` of shape ``(N, dim)`` and a scalar time.  ``grad``
    returns shape ``(N, dim)``.  Missing derivatives default to zero, which is
    convenient for stationary fixtures.
    """

    dim: int
    value: Callable
    grad: Callable | None = None
    lap: Callable | None = None
    dt: Callable | None = None
    name: str = "analytic"
    nonstrict_monotone: bool = False
    meta: dict = field(default_factory=dict)

    def evaluate(self, X, t) -> np.ndarray:
        X = _points(X, self.dim)
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return np.asarray(self.value(X, float(t_arr)), dtype=float).reshape(-1)
        out = np.empty(X.shape[0])
        t_arr = t_arr.reshape(-1)
        for tv in np.unique(t_arr):
            sel = t_arr == tv
            out[sel] = np.asarray(self.value(X[sel], float(tv)), dtype=float).reshape(-1)
        return out

    def jet(self, X, t: float):
        """Value, gradient, Laplacian and time derivative at ``(X, t)``."""
        X = _points(X, self.dim)
        n = X.shape[0]
        v = self.evaluate(X, t)
        g = np.zeros((n, self.dim)) if self.grad is None else np.asarray(self.grad(X, t), dtype=float).reshape(n, self.dim)
        lap = np.zeros(n) if self.lap is None else np.broadcast_to(np.asarray(self.lap(X, t), dtype=float), (n,)).copy()
        dtv = np.zeros(n) if self.dt is None else np.broadcast_to(np.asarray(self.dt(X, t), dtype=float), (n,)).copy()
        return v, g, lap, dtv

    def scaled(self, s: float) -> "AnalyticField":
        """Multiply the field by the constant ``s``."""
        def opt(fn):
            return None if fn is None else (lambda X, t: s * np.asarray(fn(X, t)))
        return AnalyticField(self.dim, lambda X, t: s * np.asarray(self.value(X, t)),
                             opt(self.grad), opt(self.lap), opt(self.dt),
                             name=f"{s}*{self.name}", nonstrict_monotone=self.nonstrict_monotone)

    def __sub__(self, other: "AnalyticField") -> "AnalyticField":
        def diff(a, b):
            if a is None and b is None:
                return None
            za = a or (lambda X, t: 0.0)
            zb = b or (lambda X, t: 0.0)
            return lambda X, t: np.asarray(za(X, t)) - np.asarray(zb(X, t))
        return AnalyticField(self.dim, diff(self.value, other.value), diff(self.grad, other.grad),
                             diff(self.lap, other.lap), diff(self.dt, other.dt),
                             name=f"{self.name}-{other.name}")


def constant_field(dim: int, c: float) -> AnalyticField:
    return AnalyticField(dim, lambda X, t: np.full(X.shape[0], float(c)), name=f"const({c})",
                         nonstrict_monotone=True)


def monomial_field(dim: int, axis: int = 0) -> AnalyticField:
    """The caloric, 1-homogeneous field ``x_axis``."""
    def grad(X, t):
        g = np.zeros_like(X)
        g[:, axis] = 1.0
        return g
    return AnalyticField(dim, lambda X, t: X[:, axis].copy(), grad, name=f"x{axis + 1}",
                         nonstrict_monotone=True)


def poly_field(p: PolyP) -> AnalyticField:
    """Stationary field ``p(x)``; solves the problem with ``f = tr A`` and no contact interior."""
    return AnalyticField(p.dim, lambda X, t: p(X), lambda X, t: p.grad(X),
                         lambda X, t: np.full(X.shape[0], p.f0), name="poly",
                         nonstrict_monotone=True, meta={"A": p.A.tolist()})


def polyp_difference_field(p2: PolyP, p: PolyP) -> AnalyticField:
    """``p2 - p`` as a field; 2-homogeneous and caloric when traces agree."""
    return poly_field(p2) - poly_field(p)


def halfspace_field(f0: float, e) -> AnalyticField:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    dim = e.size

    def value(X, t):
        return 0.5 * f0 * np.maximum(X @ e, 0.0) ** 2

    def grad(X, t):
        return f0 * np.maximum(X @ e, 0.0)[:, None] * e[None, :]

    def lap(X, t):
        return np.where(X @ e > 0, f0, 0.0)

    return AnalyticField(dim, value, grad, lap, name="halfspace", nonstrict_monotone=True,
                         meta={"f0": f0, "e": e.tolist()})


def traveling_wave_field(direction=None) -> AnalyticField:
    """Traveling wave ``W(e·x + t)``; 1D when ``direction`` is None."""
    e = np.array([1.0]) if direction is None else np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    dim = e.size

    def s_of(X, t):
        return X @ e + t

    def value(X, t):
        return traveling_wave(s_of(X, t), 0.0)

    def slope(X, t):
        s = s_of(X, t)
        return np.where(s > 0, np.expm1(np.maximum(s, 0.0)), 0.0)

    def grad(X, t):
        return slope(X, t)[:, None] * e[None, :]

    def lap(X, t):
        s = s_of(X, t)
        return np.where(s > 0, np.exp(np.maximum(s, 0.0)), 0.0)

    return AnalyticField(dim, value, grad, lap, slope, name="traveling_wave", meta={"e": e.tolist()})


def pinch_initial(x, kappa: float = 1.0, half_gap: float = 0.5):
    """Initial profile ``(κ/2)(|x₁| - a)₊²`` with contact interval ``|x₁| ≤ a``.

    On the positivity set the Laplacian equals ``κ``; with ``κ ≥ max f`` the
    profile is a subsolution of the stationary problem, so the evolution
    starting from it is nondecreasing in time.
    """
    X = np.asarray(x, dtype=float)
    x1 = X[..., 0] if X.ndim >= 2 else X
    return 0.5 * kappa * np.maximum(np.abs(x1) - half_gap, 0.0) ** 2


@dataclass(frozen=True)
class ClosedForm:
    """Named closed-form fixture; ``kind`` selects the formula, ``params`` its constants."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("traveling_wave_1d", "stationary_quadratic", "halfspace", "affine_f_pinch")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown closed form {self.kind!r}; expected one of {self.KINDS}")

    def field(self, dim: int = 1) -> AnalyticField:
        k, p = self.kind, self.params
        if k == "traveling_wave_1d":
            return traveling_wave_field(p.get("direction"))
        if k == "stationary_quadratic":
            return poly_field(PolyP.from_matrix(p["A"]))
        if k == "halfspace":
            return halfspace_field(float(p.get("f0", 1.0)), p.get("e", [1.0] + [0.0] * (dim - 1)))
        kappa = float(p.get("kappa", 1.0))
        a = float(p.get("half_gap", 0.5))

        def grad(X, t):
            g = np.zeros_like(X)
            g[:, 0] = kappa * np.sign(X[:, 0]) * np.maximum(np.abs(X[:, 0]) - a, 0.0)
            return g

        return AnalyticField(dim, lambda X, t: pinch_initial(X, kappa, a), grad,
                             lambda X, t: np.where(np.abs(X[:, 0]) > a, kappa, 0.0),
                             name="affine_f_pinch", nonstrict_monotone=True)

    def __call__(self, X, t, dim: int = 1) -> np.ndarray:
        return self.field(dim).evaluate(X, t)
