"""Blow-up extraction, quadratic fitting and regular/singular classification.

A free-boundary point ``(x0, t0)`` is probed through the rescalings

    v_r(y, s) = u(x0 + r y, t0 + r² s) / r²

sampled on a fixed lattice of the reference cylinder ``{|y| ≤ 2} × [-4, 0]``.
Two model classes compete on that lattice: the trace-constrained quadratic
``½ yᵀAy`` with ``tr A = f(x0)`` and the half-space profile
``(f/2) max(e·y, 0)²``.  The ratio of their lattice RMS residuals decides the
label; ambiguous points are reported as undecided.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, optimize

from .errors import DegenerateFit, NotOnFreeBoundary, OutOfDomain
from .fixtures import PolyP, stratum_of
from .mesh import ScalarField
from .pardim import ParPointSet
from .solver import TOL_CONTACT

log = logging.getLogger(__name__)

LATTICE_PER_AXIS = 33
LATTICE_TIMES = 17
REF_RADIUS = 2.0
REF_DEPTH = 4.0
THETA = 0.5
N_DIRECTIONS = 128
TOL_TRACE = 1e-10


# -- lattice and profiles -----------------------------------------------------------


def reference_lattice(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Spatial lattice points in the ball of radius 2 and the 17 times in [-4, 0]."""
    ax = np.linspace(-REF_RADIUS, REF_RADIUS, LATTICE_PER_AXIS)
    if dim == 1:
        Y = ax[:, None]
    else:
        Y1, Y2 = np.meshgrid(ax, ax, indexing="ij")
        Y = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
        Y = Y[np.linalg.norm(Y, axis=1) <= REF_RADIUS + 1e-12]
    S = np.linspace(-REF_DEPTH, 0.0, LATTICE_TIMES)
    return Y, S


@dataclass(frozen=True)
class BlowupProfile:
    x0: np.ndarray
    t0: float
    r: float
    Y: np.ndarray
    S: np.ndarray
    samples: np.ndarray  # shape (len(S), len(Y))

    @property
    def dim(self) -> int:
        return self.Y.shape[1]


def _grid_hull_ok(field: ScalarField, x0, t0, r) -> bool:
    g = field.grid
    tol = 1e-12
    return bool(
        np.all(np.abs(x0) + REF_RADIUS * r <= g.L + tol)
        and t0 - REF_DEPTH * r * r >= g.t_range[0] - tol
        and t0 <= g.t_range[1] + tol
    )


def on_free_boundary(field, x0, t0, tol_contact: float = TOL_CONTACT) -> bool:
    """Whether ``(x0, t0)`` is within one grid cell of both contact and positivity."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not isinstance(field, ScalarField):
        return float(field.evaluate(x0[None, :], t0)[0]) <= tol_contact
    g = field.grid
    k = g.nearest_time_index(t0)
    S = field.slice(k)
    lo = np.maximum(np.floor((x0 + g.L) / g.h).astype(int) - 1, 0)
    hi = np.minimum(np.ceil((x0 + g.L) / g.h).astype(int) + 1, g.n_space - 1)
    window = S[tuple(slice(a, b + 1) for a, b in zip(lo, hi))]
    return bool(np.any(window <= tol_contact) and np.any(window > tol_contact))


def blowup(field, x0, t0: float, r: float, check_free_boundary: bool = True) -> BlowupProfile:
    """Rescaled samples of ``field`` around ``(x0, t0)`` at scale ``r``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = x0.size
    if r <= 0:
        raise ValueError("r must be positive")
    if isinstance(field, ScalarField) and not _grid_hull_ok(field, x0, t0, r):
        raise OutOfDomain(f"reference cylinder at scale {r} leaves the grid hull")
    if check_free_boundary and not on_free_boundary(field, x0, t0):
        raise NotOnFreeBoundary(f"({x0.tolist()}, {t0}) is not on the discrete free boundary")
    Y, S = reference_lattice(dim)
    X = x0[None, :] + r * Y
    vals = np.empty((S.size, Y.shape[0]))
    for i, s in enumerate(S):
        vals[i] = field.evaluate(X, t0 + r * r * s)
    return BlowupProfile(x0, float(t0), float(r), Y, S, vals / (r * r))


# -- fitting --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticProfile:
    A: np.ndarray
    x0: np.ndarray
    t0: float
    f_at_base: float
    residual_quadratic: float
    residual_halfspace: float
    best_e: np.ndarray
    stratum: int
    r: float = float("nan")
    tol_eig: float = 1e-6

    @property
    def poly(self) -> PolyP:
        return PolyP(self.A, float(np.trace(self.A)))

    def snapped(self) -> PolyP:
        """The fitted polynomial with its ``stratum`` smallest eigenvalues set to zero."""
        lam, V = np.linalg.eigh(self.A)
        lam = np.maximum(lam, 0.0)
        lam[: self.stratum] = 0.0
        lam *= self.f_at_base / lam.sum()
        A = V @ np.diag(lam) @ V.T
        A = 0.5 * (A + A.T)
        A[np.diag_indices_from(A)] += (self.f_at_base - np.trace(A)) / A.shape[0]
        return PolyP(A, self.f_at_base)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "f_at_base": self.f_at_base,
            "r": self.r,
            "residual_quadratic": self.residual_quadratic,
            "residual_halfspace": self.residual_halfspace,
            "best_e": self.best_e.tolist(),
            "stratum": self.stratum,
            "tol_eig": self.tol_eig,
        }


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(a * a)))


def _project_psd(A: np.ndarray, trace: float) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    lam = np.maximum(lam, 0.0)
    if lam.sum() <= 0:
        lam = np.full_like(lam, 1.0)
    lam *= trace / lam.sum()
    P = V @ np.diag(lam) @ V.T
    P = 0.5 * (P + P.T)
    # remove the last rounding error in the trace
    P[np.diag_indices_from(P)] += (trace - np.trace(P)) / P.shape[0]
    return P


def _halfspace_residual(prof: BlowupProfile, f0: float, e: np.ndarray) -> float:
    model = 0.5 * f0 * np.maximum(prof.Y @ e, 0.0) ** 2
    return _rms(prof.samples - model[None, :])


def best_halfspace(prof: BlowupProfile, f0: float) -> tuple[np.ndarray, float]:
    """Direction minimising the half-space residual: grid search plus golden section."""
    if prof.dim == 1:
        cands = [np.array([1.0]), np.array([-1.0])]
        res = [_halfspace_residual(prof, f0, e) for e in cands]
        i = int(np.argmin(res))
        return cands[i], res[i]

    def at(theta):
        return _halfspace_residual(prof, f0, np.array([math.cos(theta), math.sin(theta)]))

    thetas = 2 * math.pi * np.arange(N_DIRECTIONS) / N_DIRECTIONS
    vals = [at(th) for th in thetas]
    k = int(np.argmin(vals))
    step = 2 * math.pi / N_DIRECTIONS
    opt = optimize.minimize_scalar(at, bracket=(thetas[k] - step, thetas[k], thetas[k] + step),
                                   method="golden", tol=1e-10)
    theta = float(opt.x) if opt.fun <= vals[k] else float(thetas[k])
    e = np.array([math.cos(theta), math.sin(theta)])
    return e, min(float(opt.fun), vals[k])


def stratum_tolerance(prof: BlowupProfile, residual: float, f0: float, base_tol: float = 1e-6) -> float:
    """Relative eigenvalue tolerance: the default, or the fit noise if that is larger."""
    basis = _rms(0.5 * np.sum(prof.Y**2, axis=1))
    return max(base_tol, 4.0 * residual / (f0 * basis))


def fit_quadratic(profile: BlowupProfile, f_at_base: float, tol_eig: float = 1e-6) -> QuadraticProfile:
    """Least-squares ``½ yᵀAy`` with ``tr A = f_at_base``, projected to the PSD cone."""
    dim = profile.dim
    n_unknown = dim * (dim + 1) // 2 - 1
    Y = profile.Y
    target = profile.samples - (0.5 * f_at_base / dim) * np.sum(Y**2, axis=1)[None, :]
    if dim == 1:
        A = np.array([[f_at_base]])
    else:
        n_samples = profile.samples.size
        if n_samples < n_unknown:
            raise DegenerateFit(f"{n_samples} samples for {n_unknown} unknowns")
        basis = np.stack([0.5 * (Y[:, 0] ** 2 - Y[:, 1] ** 2), Y[:, 0] * Y[:, 1]], axis=1)
        M = np.tile(basis, (profile.S.size, 1))
        coef, *_ = np.linalg.lstsq(M, target.reshape(-1), rcond=None)
        b1, b2 = coef
        A = (f_at_base / dim) * np.eye(2) + np.array([[b1, b2], [b2, -b1]])
    A = _project_psd(A, f_at_base)
    model = 0.5 * np.einsum("ni,ij,nj->n", Y, A, Y)
    res_q = _rms(profile.samples - model[None, :])
    e, res_h = best_halfspace(profile, f_at_base)
    tol = stratum_tolerance(profile, res_q, f_at_base, tol_eig)
    m = stratum_of(PolyP(A, f_at_base), tol)
    return QuadraticProfile(A, profile.x0, profile.t0, float(f_at_base), res_q, res_h, e, m, profile.r, tol)


# -- classification --------------------------------------------------------------------


@dataclass(frozen=True)
class PointClass:
    x0: np.ndarray
    t0: float
    fits: tuple = ()

    label = "point"

    @property
    def decisive(self) -> QuadraticProfile | None:
        return self.fits[-1] if self.fits else None

    def to_dict(self) -> dict:
        d = {"x": np.asarray(self.x0).tolist(), "t": self.t0, "class": self.label}
        fit = self.decisive
        if fit is not None:
            d["r"] = fit.r
            d["residuals"] = {"quadratic": fit.residual_quadratic, "halfspace": fit.residual_halfspace}
        return d


@dataclass(frozen=True)
class Regular(PointClass):
    e: np.ndarray = field(default_factory=lambda: np.zeros(1))
    label = "regular"

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["e"] = np.asarray(self.e).tolist()
        return d


@dataclass(frozen=True)
class Singular(PointClass):
    m: int = 0
    A: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    label = "singular"

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["m"] = self.m
        d["A"] = np.asarray(self.A).tolist()
        return d


@dataclass(frozen=True)
class Undecided(PointClass):
    reason: str = ""
    label = "undecided"

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["reason"] = self.reason
        return d


def default_r_sequence(field, x0, t0: float, r_min: float | None = None, r_max: float = 0.25) -> list[float]:
    """Dyadic radii from ``r_max`` down to the smallest resolvable scale, descending.

    For grid fields the smallest scale is the first dyadic radius at or above
    ``r_min`` (default 4h); every radius must keep the reference cylinder inside
    the grid hull.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(field, ScalarField):
        r_min = 4.0 * field.grid.h if r_min is None else r_min
    elif r_min is None:
        r_min = 2.0**-6
    out = []
    r = r_max
    while r >= r_min * (1 - 1e-12):
        if not isinstance(field, ScalarField) or _grid_hull_ok(field, x0, t0, r):
            out.append(r)
        r /= 2.0
    return out


def decide(fit: QuadraticProfile, x0, t0, fits, theta: float = THETA) -> PointClass:
    rq, rh = fit.residual_quadratic, fit.residual_halfspace
    scale = max(rq, rh)
    if scale == 0.0:
        return Undecided(x0, t0, fits, reason="both models fit exactly")
    if rh < theta * rq:
        return Regular(x0, t0, fits, e=fit.best_e)
    if rq < theta * rh:
        return Singular(x0, t0, fits, m=fit.stratum, A=fit.A)
    return Undecided(x0, t0, fits, reason=f"residual ratio {rh / rq:.3f} inside the margin")


def classify(field, x0, t0: float, f_at_base: float, r_sequence: Sequence[float] | None = None,
             theta: float = THETA, tol_eig: float = 1e-6, check_free_boundary: bool = True) -> PointClass:
    """Fit both models along ``r_sequence``; decide at the smallest radius."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if check_free_boundary and not on_free_boundary(field, x0, t0):
        raise NotOnFreeBoundary(f"({x0.tolist()}, {t0}) is not on the discrete free boundary")
    rs = sorted(default_r_sequence(field, x0, t0) if r_sequence is None else r_sequence, reverse=True)
    if not rs:
        return Undecided(x0, float(t0), (), reason="no resolvable radius inside the grid hull")
    fits = tuple(fit_quadratic(blowup(field, x0, t0, r, check_free_boundary=False), f_at_base, tol_eig)
                 for r in rs)
    return decide(fits[-1], x0, float(t0), fits, theta)


# -- singular set -----------------------------------------------------------------------


@dataclass(frozen=True)
class SingularSetOptions:
    r_classify: float | None = None  # default 4h
    density_threshold: float = 0.25
    time_stride: int = 1
    space_stride: int = 1
    t_window: tuple[float, float] | None = None
    theta: float = THETA
    tol_contact: float = TOL_CONTACT
    threads: int = 1


@dataclass
class SingularSetResult:
    singular: ParPointSet
    points: list
    undecided: list
    scanned: int
    dense: int
    classified: int
    strata: list
    regular: int = 0

    def to_dict(self) -> dict:
        return {
            "scanned": self.scanned,
            "skipped_dense_contact": self.dense,
            "classified": self.classified,
            "regular": self.regular,
            "singular": [p.to_dict() for p in self.points],
            "undecided": [p.to_dict() for p in self.undecided],
        }


def _disk_footprint(radius_nodes: int, dim: int) -> np.ndarray:
    ax = np.arange(-radius_nodes, radius_nodes + 1)
    if dim == 1:
        return np.ones(ax.size, dtype=float)
    I, J = np.meshgrid(ax, ax, indexing="ij")
    return (I**2 + J**2 <= radius_nodes**2).astype(float)


def free_boundary_nodes(S: np.ndarray, tol_contact: float = TOL_CONTACT) -> np.ndarray:
    """Contact nodes with at least one positive neighbour along an axis."""
    contact = S <= tol_contact
    pos = ~contact
    nb = np.zeros_like(contact)
    for d in range(S.ndim):
        nb |= np.roll(pos, 1, axis=d) & _not_edge(S.shape, d, first=True)
        nb |= np.roll(pos, -1, axis=d) & _not_edge(S.shape, d, first=False)
    return contact & nb


def _not_edge(shape, axis, first):
    m = np.ones(shape, dtype=bool)
    idx = [slice(None)] * len(shape)
    idx[axis] = 0 if first else -1
    m[tuple(idx)] = False
    return m


def singular_set(field: ScalarField, f_fn: Callable, opts: SingularSetOptions | None = None) -> SingularSetResult:
    """Scan discrete free-boundary nodes slice by slice and keep those classified singular.

    Nodes whose contact density in the classification ball exceeds
    ``density_threshold`` are skipped: a singular point has vanishing contact
    density, so such nodes cannot be singular at the resolved scale.
    """
    opts = opts or SingularSetOptions()
    g = field.grid
    r_cls = opts.r_classify or 4.0 * g.h
    rad = int(round(r_cls / g.h))
    foot = _disk_footprint(rad, g.dim)
    foot /= foot.sum()
    ks = range(0, g.n_time, max(1, opts.time_stride))
    jobs = []
    scanned = dense = 0
    for k in ks:
        t = g.time(k)
        if opts.t_window is not None and not (opts.t_window[0] <= t <= opts.t_window[1]):
            continue
        if t - REF_DEPTH * r_cls * r_cls < g.t_range[0] - 1e-12:
            continue
        S = field.slice(k)
        fb = free_boundary_nodes(S, opts.tol_contact)
        if not fb.any():
            continue
        density = ndimage.correlate((S <= opts.tol_contact).astype(float), foot, mode="nearest")
        for idx in np.argwhere(fb):
            if opts.space_stride > 1 and any(int(i) % opts.space_stride for i in idx):
                continue
            x0 = g.axis[idx]
            if np.any(np.abs(x0) + REF_RADIUS * r_cls > g.L + 1e-12):
                continue
            scanned += 1
            if density[tuple(idx)] > opts.density_threshold:
                dense += 1
                continue
            jobs.append((x0, t))

    def work(job):
        x0, t = job
        f0 = float(np.asarray(f_fn(x0[None, :])).reshape(-1)[0])
        return classify(field, x0, t, f0, [r_cls], theta=opts.theta, check_free_boundary=False)

    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as ex:
            results = list(ex.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    sing = [c for c in results if isinstance(c, Singular)]
    und = [c for c in results if isinstance(c, Undecided)]
    pset = ParPointSet([(c.x0, c.t0) for c in sing], g.dim)
    n_reg = sum(isinstance(c, Regular) for c in results)
    return SingularSetResult(pset, sing, und, scanned, dense, len(jobs), [c.m for c in sing], n_reg)
