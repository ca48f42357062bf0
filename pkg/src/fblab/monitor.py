"""Radius sweeps of the functionals at a base point and the inequality checks built on them.

Every check fits the smallest constant C making its inequality hold on all
sampled radii and passes when that constant stays below a configured ceiling.
Derivative inequalities are tested in integrated form between consecutive
radii, so "almost monotone" means: after adding the fitted correction term the
discrete increments are nonnegative.  No fit involves randomness.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InsufficientSamples, NoisyTail, NotSingular
from .fixtures import PolyP
from .functionals import DEFAULT_Q, FunctionalSample, GaussQuad, localize, sample
from .mesh import ScalarField
from .singular import PointClass, Singular
from .solver import TOL_CONTACT

CSV_HEADER = ("r", "H", "D", "W", "phi", "phi_gamma", "ip_w_Hw", "ip_Zw_Hw")
R_MAX = 0.25
R_RATIO = 2.0**0.25
RESOLVED_SCALES = 8.0  # in units of h: smallest radius trusted for extrapolation and decay fits


# -- traces ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalTrace:
    x0: np.ndarray
    t0: float
    p_used: PolyP | None
    gamma: float
    samples: tuple
    with_cutoff: bool = True
    h: float | None = None  # grid spacing of the source field, None for analytic fields

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples], dtype=float)

    @property
    def r(self) -> np.ndarray:
        return self.column("r")

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for s in self.samples:
            wr.writerow([repr(float(getattr(s, k))) for k in CSV_HEADER])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "x0": np.asarray(self.x0).tolist(),
            "t0": self.t0,
            "p": None if self.p_used is None else self.p_used.to_dict(),
            "gamma": self.gamma,
            "with_cutoff": self.with_cutoff,
            "n_samples": len(self.samples),
            "h": self.h,
        }


def default_r_grid(h: float | None, r_max: float = R_MAX, r_min: float | None = None) -> list[float]:
    """Geometric radii with ratio 2^{1/4} from ``r_min`` (default 4h) up to ``r_max``."""
    if r_min is None:
        r_min = 4.0 * h if h is not None else 2.0**-6
    n = int(math.floor(math.log(r_max / r_min) / math.log(R_RATIO) + 1e-9))
    return [r_max / R_RATIO**k for k in range(n, -1, -1)]


def trace(field, x0, t0: float, p: PolyP | None, gamma: float, r_grid: Sequence[float] | None = None,
          quad: GaussQuad | None = None) -> FunctionalTrace:
    """Sample all functionals of ``w = (u(x0 + ·, t0 + ·) - p)·ζ`` over ``r_grid``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    h = field.grid.h if isinstance(field, ScalarField) else None
    rs = sorted(default_r_grid(h) if r_grid is None else r_grid)
    if any(b <= a for a, b in zip(rs, rs[1:])) or rs[0] <= 0:
        raise ValueError("r_grid must be positive and strictly increasing")
    w = localize(field, x0, t0, p, cutoff=True)
    quad = quad or GaussQuad.create(x0.size, DEFAULT_Q)
    samples = tuple(sample(w, r, gamma, quad) for r in rs)
    return FunctionalTrace(x0, float(t0), p, float(gamma), samples, True, h)


# -- reports -------------------------------------------------------------------------


@dataclass
class CheckReport:
    name: str
    fitted_constant: float
    ceiling: float
    passed: bool
    margin: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "fitted_constant": _json_float(self.fitted_constant),
            "ceiling": _json_float(self.ceiling),
            "margin": _json_float(self.margin),
            "pass": self.passed,
            "details": _jsonable(self.details),
        }


def _json_float(v):
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return _json_float(obj)
    return obj


def _report(name: str, per_sample_C: np.ndarray, r_at: np.ndarray, ceiling: float, extra: dict | None = None,
            n_worst: int = 3) -> CheckReport:
    """Fitted constant = max(0, max of per-sample requirements); plus worst offenders and passing prefix."""
    req = np.nan_to_num(np.asarray(per_sample_C, dtype=float), nan=np.inf)
    C = float(max(0.0, req.max())) if req.size else 0.0
    order = np.argsort(-req, kind="stable")[:n_worst]
    worst = [{"r": float(r_at[i]), "required_C": float(req[i])} for i in order if req[i] > 0]
    cum = np.maximum.accumulate(np.maximum(req, 0.0)) if req.size else req
    ok = np.nonzero(cum <= ceiling)[0]
    prefix = float(r_at[ok[-1]]) if ok.size else None
    details = {"worst": worst, "largest_passing_r": prefix}
    if extra:
        details.update(extra)
    passed = bool(math.isfinite(C) and C <= ceiling)
    return CheckReport(name, C, float(ceiling), passed, float(ceiling - C), details)


def _need(trace: FunctionalTrace, n: int):
    if len(trace.samples) < n:
        raise InsufficientSamples(f"need at least {n} samples, have {len(trace.samples)}")


# -- almost-monotonicity checks ----------------------------------------------------------


def check_cubic(trace: FunctionalTrace, ceiling: float = math.inf) -> CheckReport:
    """Smallest C with |<w, 𝐇w>_r| ≤ C r³ and |<Zw, 𝐇w>_r| ≤ C r³ on every sample."""
    _need(trace, 1)
    r = trace.r
    req = np.maximum(np.abs(trace.column("ip_w_Hw")), np.abs(trace.column("ip_Zw_Hw"))) / r**3
    return _report("cubic", req, r, ceiling)


def _extrapolate_zero(r: np.ndarray, y: np.ndarray, n: int = 3) -> float:
    k = min(n, r.size)
    if k < 2:
        return float(y[0])
    slope, icept = np.polyfit(r[:k], y[:k], 1)
    return float(icept)


def check_weiss(trace: FunctionalTrace, ceiling: float = math.inf, tol_W: float | None = None) -> CheckReport:
    """Weiss energy: slopes of W bounded below by -C, and D - 2H ≥ -C r⁵.

    When ``tol_W`` is given, the linear extrapolation of W to r = 0 must also
    lie in ``[-tol_W, tol_W]``.
    """
    _need(trace, 3)
    r = trace.r
    W = trace.column("W")
    dr = np.diff(r)
    slope_req = -np.diff(W) / dr
    gap_req = -(trace.column("D") - 2.0 * trace.column("H")) / r**5
    req = np.concatenate([slope_req, gap_req])
    r_at = np.concatenate([r[1:], r])
    w0 = _extrapolate_zero(r, W)
    extra = {
        "slope_constant": float(max(0.0, slope_req.max())),
        "gap_constant": float(max(0.0, gap_req.max())),
        "W_at_zero": w0,
    }
    rep = _report("weiss", req, r_at, ceiling, extra)
    if tol_W is not None:
        extra_ok = abs(w0) <= tol_W
        rep.details["tol_W"] = tol_W
        rep.details["W_at_zero_ok"] = bool(extra_ok)
        rep.passed = rep.passed and bool(extra_ok)
    return rep


def epsilon_for(gamma: float, rule: str = "base", alpha: float | None = None) -> float:
    """Exponent of the frequency error term: 5 - 2γ, or 5 + α - 2γ under the growth hypothesis."""
    if rule == "base":
        return 5.0 - 2.0 * gamma
    if rule == "refined":
        if alpha is None:
            raise ValueError("refined rule needs alpha")
        return 5.0 + alpha - 2.0 * gamma
    raise ValueError(f"unknown epsilon rule {rule!r}")


def check_frequency(trace: FunctionalTrace, epsilon_rule: str = "base", alpha: float | None = None,
                    ceiling: float = math.inf) -> CheckReport:
    """Lower bound φ^γ ≥ 2 - C r^ε and the integrated derivative bound.

    Between consecutive radii the derivative inequality integrates to

        Δφ^γ + (C/ε) Δ(r^ε) ≥ ∫ (2/r) (2r² <w,𝐇w> / (H + r^{2γ}))² dr,

    with the right side evaluated by the trapezoid rule.
    """
    _need(trace, 3)
    gamma = trace.gamma
    eps = epsilon_for(gamma, epsilon_rule, alpha)
    if eps <= 0:
        raise ValueError(f"epsilon = {eps:.3f} must be positive (gamma too large for this rule)")
    r = trace.r
    pg = trace.column("phi_gamma")
    H = trace.column("H")
    ip = trace.column("ip_w_Hw")
    low_req = (2.0 - pg) / r**eps
    integrand = (2.0 / r) * (2.0 * r**2 * ip / (H + r ** (2 * gamma))) ** 2
    I = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(r)
    der_req = eps * (I - np.diff(pg)) / np.diff(r**eps)
    req = np.concatenate([low_req, der_req])
    r_at = np.concatenate([r, r[1:]])
    extra = {
        "epsilon": eps,
        "epsilon_rule": epsilon_rule,
        "alpha": alpha,
        "lower_bound_constant": float(max(0.0, low_req.max())),
        "derivative_constant": float(max(0.0, der_req.max())),
    }
    return _report("frequency", req, r_at, ceiling, extra)


def check_monneau(trace: FunctionalTrace, ceiling: float = math.inf) -> CheckReport:
    """Slopes of H/r⁴ bounded below by -C."""
    _need(trace, 3)
    r = trace.r
    M = trace.column("H") / r**4
    req = -np.diff(M) / np.diff(r)
    return _report("monneau", req, r[1:], ceiling)


# -- frequency limit and doubling ---------------------------------------------------------


@dataclass(frozen=True)
class LambdaEstimate:
    value: float
    raw: float
    a: float
    b: float
    fit_rms: float
    tail_ratio: float
    n_used: int

    def to_dict(self) -> dict:
        return {k: _json_float(v) if isinstance(v, float) else v for k, v in self.__dict__.items()}


B_BOUNDS = (0.25, 6.0)


def _tail_fit(lr: np.ndarray, y: np.ndarray, b: float):
    M = np.column_stack([np.ones(lr.size), np.exp(b * lr)])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return float(np.sqrt(np.mean((M @ coef - y) ** 2))), float(coef[0]), float(coef[1])


def estimate_lambda(trace: FunctionalTrace, n_tail: int = 6, noise_tol: float = 0.05,
                    b_bounds: tuple[float, float] = B_BOUNDS, r_floor: float | None = None) -> LambdaEstimate:
    """Extrapolate φ^γ(r) to r = 0 with the model ``λ + a r^b`` on the smallest radii.

    Only radii at or above ``r_floor`` (default 8h for grid traces) enter the
    fit; below it the solver's O(h²) error is comparable to w itself.

    For fixed ``b`` the pair (λ, a) is a linear least-squares solution; ``b``
    is located on a grid over ``b_bounds`` and then refined by a bounded scalar
    minimization.  The estimate is clamped to [0, γ].
    """
    if r_floor is None:
        r_floor = RESOLVED_SCALES * trace.h if trace.h is not None else 0.0
    keep = np.nonzero(trace.r >= r_floor * (1 - 1e-12))[0]
    if keep.size < 5:
        raise InsufficientSamples(f"need at least 5 samples above r = {r_floor:.4g}, have {keep.size}")
    k = min(n_tail, keep.size)
    idx = keep[:k]
    r = trace.r[idx]
    y = trace.column("phi_gamma")[idx]
    H0 = trace.samples[idx[0]].H
    tail = float(r[0] ** (2 * trace.gamma) / H0) if H0 > 0 else math.inf
    if np.ptp(y) <= 1e-14 * max(1.0, abs(y).max()):
        lam = float(y.mean())
        return LambdaEstimate(float(np.clip(lam, 0, trace.gamma)), lam, 0.0, 0.0, 0.0, tail, k)
    lr = np.log(r)
    grid = np.linspace(*b_bounds, 240)
    res = [_tail_fit(lr, y, b)[0] for b in grid]
    i = int(np.argmin(res))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    opt = minimize_scalar(lambda b: _tail_fit(lr, y, b)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    b = float(opt.x) if opt.fun <= res[i] else float(grid[i])
    rms, lam, a = _tail_fit(lr, y, b)
    est = LambdaEstimate(float(np.clip(lam, 0.0, trace.gamma)), lam, a, b, rms, tail, k)
    if rms > noise_tol:
        raise NoisyTail(f"frequency tail fit residual {rms:.3g} exceeds {noise_tol}", estimate=est)
    return est


def check_doubling(trace: FunctionalTrace, lam: float, delta: float, c_floor: float = 1e-3,
                   ceiling: float = math.inf) -> CheckReport:
    """Bracket (H(R)+R^{2γ})/(H(r)+r^{2γ}) between c (R/r)^{2λ} and C_δ (R/r)^{2λ+δ} over all pairs."""
    _need(trace, 2)
    r = trace.r
    if r[-1] / r[0] < 8.0 - 1e-12:
        raise InsufficientSamples("doubling needs radii spanning a factor of 8")
    g = trace.gamma
    Ht = trace.column("H") + r ** (2 * g)
    i, j = np.triu_indices(r.size, k=1)
    q = r[j] / r[i]
    ratio = Ht[j] / Ht[i]
    lower = ratio / q ** (2 * lam)
    upper = ratio / q ** (2 * lam + delta)
    c = float(lower.min())
    C = float(upper.max())
    worst = int(np.argmax(upper))
    rep = CheckReport(
        "doubling",
        C,
        float(ceiling),
        bool(c >= c_floor and C <= ceiling),
        float(ceiling - C),
        {"c": c, "c_floor": c_floor, "C_delta": C, "lambda": lam, "delta": delta,
         "worst_pair": [float(r[i[worst]]), float(r[j[worst]])]},
    )
    return rep


# -- decay, cleaning ----------------------------------------------------------------------


def _cylinder_lattice(dim: int, n_axis: int = 17, n_time: int = 9):
    ax = np.linspace(-1.0, 1.0, n_axis)
    if dim == 1:
        Y = ax[:, None]
    else:
        A, B = np.meshgrid(ax, ax, indexing="ij")
        Y = np.stack([A.ravel(), B.ravel()], axis=1)
        Y = Y[np.linalg.norm(Y, axis=1) <= 1.0 + 1e-12]
    S = np.linspace(-1.0, 0.0, n_time)
    return Y, S


def dyadic_radii(r_min: float, r_max: float) -> list[float]:
    out = []
    r = r_max
    while r >= r_min * (1 - 1e-12):
        out.append(r)
        r /= 2.0
    return sorted(out)


def decay_norms(field, x0, t0: float, p: PolyP | None, radii: Sequence[float]):
    """Lattice L² (RMS) and sup norms of ``w_r(y, s) = w(r y, r² s)`` on the unit cylinder."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    w = localize(field, x0, t0, p, cutoff=False)
    Y, S = _cylinder_lattice(x0.size)
    l2, sup = [], []
    for r in radii:
        vals = np.concatenate([w.evaluate(r * Y, r * r * s) for s in S])
        l2.append(float(np.sqrt(np.mean(vals**2))))
        sup.append(float(np.max(np.abs(vals))))
    return np.array(l2), np.array(sup)


def check_L2_decay(field, x0, t0: float, lambda_star: float, delta: float, p: PolyP | None = None,
                   radii: Sequence[float] | None = None, slack: float = 0.0) -> CheckReport:
    """Log-log slope of ``‖w_r‖`` against r; pass if it is at least ``λ* - δ - slack``."""
    if radii is None:
        h = field.grid.h if isinstance(field, ScalarField) else 2.0**-9
        radii = dyadic_radii(RESOLVED_SCALES * h, R_MAX)
    radii = np.asarray(sorted(radii), dtype=float)
    if radii.size < 2:
        raise InsufficientSamples("need at least two radii")
    l2, sup = decay_norms(field, x0, t0, p, radii)
    target = lambda_star - delta - slack
    extra = {"radii": radii, "l2": l2, "sup": sup, "target_exponent": target,
             "lambda_star": lambda_star, "delta": delta, "slack": slack}
    if np.all(l2 == 0):
        extra.update(exponent=None, sup_exponent=None, vacuous=True)
        return CheckReport("L2_decay", 0.0, 0.0, True, 0.0, extra)
    pos = l2 > 0
    slope, icept = np.polyfit(np.log(radii[pos]), np.log(l2[pos]), 1)
    spos = sup > 0
    sslope = float(np.polyfit(np.log(radii[spos]), np.log(sup[spos]), 1)[0]) if spos.sum() >= 2 else None
    extra.update(exponent=float(slope), sup_exponent=sslope, C=float(math.exp(icept)), vacuous=False)
    # fitted_constant here is the exponent shortfall; pass iff it is ≤ 0
    short = target - float(slope)
    return CheckReport("L2_decay", short, 0.0, bool(short <= 0.0), -short, extra)


def check_cleaning(field: ScalarField, x0, t0: float, epsilon: float, pclass: PointClass,
                   r_min: float | None = None, r_max: float = 0.125, tol_contact: float = TOL_CONTACT,
                   flatness_ceiling: float = math.inf) -> CheckReport:
    """No contact in ``B_r(x0) × [t0 + r^{2-ε}, t_end]`` for dyadic r; flatness at top-stratum points."""
    if not isinstance(pclass, Singular):
        raise NotSingular("cleaning applies to singular points only")
    g = field.grid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    r_min = 4.0 * g.h if r_min is None else r_min
    radii = dyadic_radii(r_min, r_max)
    coords = g.coords().reshape(-1, g.dim)
    dist = np.linalg.norm(coords - x0, axis=1)
    top = pclass.m == g.dim - 1
    normal = None
    if top:
        lam, V = np.linalg.eigh(np.asarray(pclass.A))
        normal = V[:, -1]
    violations = []
    flat_req = []
    for r in radii:
        t_from = t0 + r ** (2.0 - epsilon)
        ball = dist < r
        bad = 0
        first_bad = None
        for k in range(g.n_time):
            t = g.time(k)
            if t < t_from - 1e-12:
                continue
            hits = np.count_nonzero((field.slice(k).reshape(-1) <= tol_contact) & ball)
            if hits:
                bad += hits
                first_bad = t if first_bad is None else first_bad
        violations.append({"r": r, "t_from": t_from, "contact_nodes": bad, "first_time": first_bad})
        if top:
            worst = 0.0
            for k in range(g.n_time):
                t = g.time(k)
                if not (t0 - r * r - 1e-12 <= t <= t0 + 1e-12):
                    continue
                sel = (field.slice(k).reshape(-1) <= tol_contact) & ball
                if np.any(sel):
                    worst = max(worst, float(np.max(np.abs((coords[sel] - x0) @ normal))))
            flat_req.append(worst / r ** (2.0 - epsilon))
    n_bad = sum(v["contact_nodes"] for v in violations)
    flat_C = float(max(flat_req)) if flat_req else None
    passed = n_bad == 0 and (flat_C is None or flat_C <= flatness_ceiling)
    details = {"epsilon": epsilon, "radii": radii, "violations": violations, "top_stratum": top,
               "flatness_constant": flat_C, "flatness_per_r": flat_req,
               "normal": None if normal is None else normal.tolist()}
    return CheckReport("cleaning", float(n_bad), 0.0, bool(passed), float(-n_bad), details)


# -- saturation bootstrap -------------------------------------------------------------------


@dataclass
class BootstrapStage:
    gamma: float
    alpha_in: float
    lambda_hat: float
    decay_exponent: float
    certified_exponent: float
    alpha_out: float
    frequency: CheckReport | None

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "alpha_in": self.alpha_in,
            "lambda_hat": self.lambda_hat,
            "decay_exponent": self.decay_exponent,
            "certified_exponent": self.certified_exponent,
            "alpha_out": self.alpha_out,
            "frequency": None if self.frequency is None else self.frequency.to_dict(),
        }


def bootstrap(field, x0, t0: float, p: PolyP, gammas: Sequence[float] = (2.25, 2.5, 2.75), delta: float = 0.2,
              r_grid: Sequence[float] | None = None, decay_radii: Sequence[float] | None = None,
              alpha0: float = 0.0) -> list[BootstrapStage]:
    """Run the γ schedule, feeding each stage's measured growth ``α = exponent - 2`` into the next.

    At each stage the certified decay exponent is ``min(measured, λ̂ - δ)``:
    the rate the stage's frequency limit supports and the data confirms.
    """
    stages = []
    alpha = alpha0
    decay = check_L2_decay(field, x0, t0, 0.0, 0.0, p, decay_radii)
    measured = decay.details["exponent"]
    measured = float("inf") if measured is None else float(measured)
    for g in gammas:
        tr = trace(field, x0, t0, p, g, r_grid)
        try:
            lam = estimate_lambda(tr).value
        except NoisyTail as exc:
            lam = exc.estimate.value
        eps = epsilon_for(g, "refined", alpha)
        freq = check_frequency(tr, "refined", alpha) if eps > 0 else None
        certified = min(measured, lam - delta)
        alpha_next = float(np.clip(measured - 2.0, 0.0, 1.0)) if math.isfinite(measured) else 1.0
        stages.append(BootstrapStage(g, alpha, lam, measured, certified, alpha_next, freq))
        alpha = alpha_next
    return stages


def bootstrap_monotone(stages: Sequence[BootstrapStage], tol: float = 1e-12) -> bool:
    ex = [s.certified_exponent for s in stages]
    return all(b >= a - tol for a, b in zip(ex, ex[1:]))
