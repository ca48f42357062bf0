"""Implicit Euler time stepping of the parabolic obstacle problem.

Each step solves the complementarity problem

    u >= 0,   (u - u_prev)/dt - Δ_h u + f >= 0,   u · ((u - u_prev)/dt - Δ_h u + f) = 0

by projected red-black SOR.  Scenarios are described by small JSON-compatible
dictionaries so that the same descriptors drive the CLI, the tests and the
packaged scenario files.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import NoConvergence, SchemaError, ValidationError
from .fixtures import PolyP, pinch_initial, traveling_wave
from .mesh import ScalarField, SpaceTimeGrid

log = logging.getLogger(__name__)

TOL_CONTACT = 1e-10
_MONO_SLACK = 1e-9


# -- descriptors -------------------------------------------------------------------


def _req(doc: dict, key: str, pointer: str):
    if not isinstance(doc, dict):
        raise SchemaError(pointer, "expected an object")
    if key not in doc:
        raise SchemaError(f"{pointer}/{key}", "required key missing")
    return doc[key]


def _num(value, pointer: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(pointer, f"expected a number, got {type(value).__name__}")
    return float(value)


@dataclass(frozen=True)
class SourceSpec:
    """Right-hand side ``f``: ``constant`` value, ``affine`` a + b·x, or ``tabulated`` node values."""

    kind: str
    params: dict

    @classmethod
    def from_dict(cls, doc: dict, dim: int, pointer: str = "/f") -> "SourceSpec":
        kind = _req(doc, "kind", pointer)
        if kind == "constant":
            return cls(kind, {"value": _num(_req(doc, "value", pointer), f"{pointer}/value")})
        if kind == "affine":
            a = _num(_req(doc, "a", pointer), f"{pointer}/a")
            b = np.atleast_1d(np.asarray(_req(doc, "b", pointer), dtype=float))
            if b.size != dim:
                raise SchemaError(f"{pointer}/b", f"expected {dim} coefficients")
            return cls(kind, {"a": a, "b": b.tolist()})
        if kind == "tabulated":
            return cls(kind, {"values": _req(doc, "values", pointer)})
        raise SchemaError(f"{pointer}/kind", f"unknown source kind {kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def __call__(self, X, grid: SpaceTimeGrid | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "constant":
            return np.full(X.shape[0], self.params["value"])
        if self.kind == "affine":
            return self.params["a"] + X @ np.asarray(self.params["b"])
        if grid is None:
            raise ValueError("tabulated source needs the scenario grid")
        vals = np.asarray(self.params["values"], dtype=float).reshape(grid.spatial_shape)
        one = SpaceTimeGrid(grid.dim, grid.L, grid.h, 1.0, (0.0, 1.0))
        return ScalarField(one, np.stack([vals, vals])).evaluate(X, 0.0)

    def lipschitz(self, grid: SpaceTimeGrid | None = None) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "affine":
            return float(np.linalg.norm(self.params["b"]))
        vals = np.asarray(self.params["values"], dtype=float).reshape(grid.spatial_shape)
        return float(max(np.max(np.abs(np.diff(vals, axis=d))) / grid.h for d in range(grid.dim)))


_DATA_KINDS = ("zero", "constant", "traveling_wave", "pinch", "poly", "tabulated", "extrude")


@dataclass(frozen=True)
class DataSpec:
    """Closed-form or tabulated data ``g(x, t)`` used for initial and boundary values.

    ``extrude`` is boundary-only in dim 2: the boundary trace is the discrete
    solution of the companion 1D problem in ``x₁``, so the 2D solution is
    independent of ``x₂`` up to solver tolerance.
    """

    kind: str
    params: dict

    @classmethod
    def from_dict(cls, doc: dict, dim: int, pointer: str) -> "DataSpec":
        kind = _req(doc, "kind", pointer)
        if kind not in _DATA_KINDS:
            raise SchemaError(f"{pointer}/kind", f"unknown data kind {kind!r}")
        params = {k: v for k, v in doc.items() if k != "kind"}
        if kind == "constant":
            _num(_req(doc, "value", pointer), f"{pointer}/value")
        if kind == "poly":
            A = np.asarray(_req(doc, "A", pointer), dtype=float)
            if A.shape != (dim, dim):
                raise SchemaError(f"{pointer}/A", f"expected a {dim}x{dim} matrix")
        if kind == "pinch":
            for key in ("kappa", "half_gap", "rate"):
                if key in doc:
                    _num(doc[key], f"{pointer}/{key}")
        if kind == "extrude":
            if dim != 2:
                raise SchemaError(f"{pointer}/kind", "extrude requires dim 2")
            cls.from_dict(_req(doc, "source", pointer), 1, f"{pointer}/source")
        return cls(kind, params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @property
    def stateful(self) -> bool:
        return self.kind == "extrude"

    def __call__(self, X, t: float, grid: SpaceTimeGrid | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k, p = self.kind, self.params
        if k == "zero":
            return np.zeros(X.shape[0])
        if k == "constant":
            return np.full(X.shape[0], float(p["value"]))
        if k == "traveling_wave":
            e = np.asarray(p.get("direction", [1.0] + [0.0] * (X.shape[1] - 1)), dtype=float)
            e = e / np.linalg.norm(e)
            return traveling_wave(X @ e, t)
        if k == "pinch":
            base = pinch_initial(X, float(p.get("kappa", 1.0)), float(p.get("half_gap", 0.5)))
            return base + float(p.get("rate", 0.0)) * (t - float(p.get("t0", 0.0)))
        if k == "poly":
            return PolyP.from_matrix(p["A"])(X)
        if k == "tabulated":
            if grid is None:
                raise ValueError("tabulated data needs the scenario grid")
            vals = np.asarray(p["values"], dtype=float).reshape(grid.spatial_shape)
            one = SpaceTimeGrid(grid.dim, grid.L, grid.h, 1.0, (0.0, 1.0))
            return ScalarField(one, np.stack([vals, vals])).evaluate(X, 0.0)
        raise ValueError("extrude data is produced during solve, not evaluated pointwise")


@dataclass(frozen=True)
class Scenario:
    """A complete problem definition on a space-time grid."""

    name: str
    grid: SpaceTimeGrid
    f_spec: SourceSpec
    initial_data: DataSpec
    boundary_data: DataSpec
    output_dt: float | None = None
    output_from: float | None = None
    nonstrict_monotone: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def save_every(self) -> int:
        if self.output_dt is None:
            return 1
        return max(1, int(round(self.output_dt / self.grid.dt)))

    def f_nodes(self) -> np.ndarray:
        g = self.grid
        return self.f_spec(g.coords().reshape(-1, g.dim), g).reshape(g.spatial_shape)

    def initial_nodes(self) -> np.ndarray:
        g = self.grid
        if self.initial_data.kind == "extrude":
            raise ValidationError("extrude is only valid as boundary data")
        X = g.coords().reshape(-1, g.dim)
        return self.initial_data(X, g.t_range[0], g).reshape(g.spatial_shape)

    def validate(self) -> "Scenario":
        """Check positivity of f, nonnegativity of the initial data and boundary monotonicity."""
        f = self.f_nodes()
        if not np.all(np.isfinite(f)) or f.min() <= 0.0:
            raise ValidationError(f"f must be positive (min over nodes {f.min():.6g})")
        u0 = self.initial_nodes()
        if u0.min() < 0.0:
            raise ValidationError(f"initial data must be nonnegative (min {u0.min():.6g})")
        if self.boundary_data.kind == "extrude":
            self.companion().validate()
            return self
        g = self.grid
        Xb = g.coords()[g.boundary_mask()]
        prev = None
        for t in g.times:
            cur = self.boundary_data(Xb, float(t), g)
            if prev is not None and np.any(cur < prev - 1e-14 * max(1.0, np.abs(prev).max())):
                raise ValidationError(f"boundary data decreases in time near t = {t:.6g}")
            prev = cur
        return self

    def companion(self) -> "Scenario":
        """1D problem in ``x₁`` whose solution feeds an ``extrude`` boundary."""
        g = self.grid
        src = DataSpec.from_dict(self.boundary_data.params["source"], 1, "/boundary/source")
        if self.f_spec.kind == "affine":
            b = self.f_spec.params["b"]
            if any(abs(v) > 0 for v in b[1:]):
                raise ValidationError("extrude requires f independent of x2")
            f1 = SourceSpec("affine", {"a": self.f_spec.params["a"], "b": b[:1]})
        elif self.f_spec.kind == "constant":
            f1 = self.f_spec
        else:
            raise ValidationError("extrude requires a constant or affine f")
        init = self.initial_data
        if init.kind in ("tabulated", "poly", "extrude"):
            raise ValidationError("extrude requires closed-form initial data depending on x1 only")
        return Scenario(
            name=f"{self.name}/companion",
            grid=SpaceTimeGrid(1, g.L, g.h, g.dt, g.t_range),
            f_spec=f1,
            initial_data=init,
            boundary_data=src,
            nonstrict_monotone=self.nonstrict_monotone,
        )

    def to_dict(self) -> dict:
        g = self.grid
        doc = {
            "name": self.name,
            "dim": g.dim,
            "L": g.L,
            "h": g.h,
            "dt": g.dt,
            "t_range": list(g.t_range),
            "f": self.f_spec.to_dict(),
            "initial": self.initial_data.to_dict(),
            "boundary": self.boundary_data.to_dict(),
            "nonstrict_monotone": self.nonstrict_monotone,
        }
        if self.output_dt is not None or self.output_from is not None:
            doc["output"] = {"dt": self.output_dt, "from": self.output_from}
        doc.update(copy.deepcopy(self.extra))
        return doc

    def with_resolution(self, h: float) -> "Scenario":
        """Same problem at spatial step ``h`` with ``dt = h²``."""
        g = self.grid
        grid = SpaceTimeGrid(g.dim, g.L, h, h * h, g.t_range)
        return Scenario(self.name, grid, self.f_spec, self.initial_data, self.boundary_data,
                        self.output_dt, self.output_from, self.nonstrict_monotone, self.extra)


_CORE_KEYS = {"name", "dim", "L", "h", "dt", "t_range", "f", "initial", "boundary", "output",
              "nonstrict_monotone"}


def scenario_from_dict(doc: dict, pointer: str = "", validate: bool = True) -> Scenario:
    """Build a :class:`Scenario` from a JSON-compatible dictionary.

    ``dt`` defaults to ``h²``.  Unknown keys are kept in ``Scenario.extra``
    (analysis defaults and check ceilings live there).
    """
    if not isinstance(doc, dict):
        raise SchemaError(pointer, "expected an object")
    dim = _req(doc, "dim", pointer)
    if dim not in (1, 2) or isinstance(dim, bool):
        raise SchemaError(f"{pointer}/dim", "dim must be 1 or 2")
    L = _num(_req(doc, "L", pointer), f"{pointer}/L")
    h = _num(_req(doc, "h", pointer), f"{pointer}/h")
    dt = _num(doc["dt"], f"{pointer}/dt") if doc.get("dt") is not None else h * h
    tr = _req(doc, "t_range", pointer)
    if not isinstance(tr, list) or len(tr) != 2:
        raise SchemaError(f"{pointer}/t_range", "expected [t_begin, t_end]")
    t_range = (_num(tr[0], f"{pointer}/t_range/0"), _num(tr[1], f"{pointer}/t_range/1"))
    try:
        grid = SpaceTimeGrid(dim, L, h, dt, t_range)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    out = doc.get("output") or {}
    sc = Scenario(
        name=str(doc.get("name", "scenario")),
        grid=grid,
        f_spec=SourceSpec.from_dict(_req(doc, "f", pointer), dim, f"{pointer}/f"),
        initial_data=DataSpec.from_dict(_req(doc, "initial", pointer), dim, f"{pointer}/initial"),
        boundary_data=DataSpec.from_dict(_req(doc, "boundary", pointer), dim, f"{pointer}/boundary"),
        output_dt=out.get("dt"),
        output_from=out.get("from"),
        nonstrict_monotone=bool(doc.get("nonstrict_monotone", False)),
        extra={k: copy.deepcopy(v) for k, v in doc.items() if k not in _CORE_KEYS},
    )
    return sc.validate() if validate else sc


def builtin_names() -> list[str]:
    pkg = resources.files("fblab") / "scenarios"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def builtin_document(name: str) -> dict:
    path = resources.files("fblab") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise KeyError(f"no builtin scenario {name!r}; available: {builtin_names()}")
    return json.loads(path.read_text())


def load_scenario(name: str, resolution: float | None = None, validate: bool = True) -> Scenario:
    """Packaged scenario by name, optionally at a different spatial resolution."""
    doc = builtin_document(name)
    if resolution is not None:
        doc["h"] = resolution
        doc.pop("dt", None)
    return scenario_from_dict(doc, validate=validate)


# -- stepping ------------------------------------------------------------------------


@dataclass(frozen=True)
class SolveOptions:
    omega: float = 1.5
    tol_lcp: float = 1e-10
    max_sweeps: int = 100_000
    check_every: int = 4
    tol_mono: float | None = None
    warm_start: bool = True


@dataclass
class SolveReport:
    """Solver output with a-posteriori diagnostics.

    ``max_negative_u`` and ``max_negative_dt_u`` are the most negative values of
    ``u`` and of the discrete ``∂t u`` over all steps, capped above at 0.
    """

    field: ScalarField
    max_lcp_residual: float
    max_negative_u: float
    max_negative_dt_u: float
    iterations_per_step: np.ndarray
    scenario: Scenario | None = None
    tol_mono: float = 0.0
    nonstrict_monotone: bool = False

    @property
    def monotone_ok(self) -> bool:
        return self.max_negative_dt_u >= -self.tol_mono

    def summary(self) -> dict:
        its = self.iterations_per_step
        return {
            "scenario": None if self.scenario is None else self.scenario.name,
            "grid": {"dim": self.field.grid.dim, "h": self.field.grid.h,
                     "dt_solver": None if self.scenario is None else self.scenario.grid.dt,
                     "dt_output": self.field.grid.dt, "t_range": list(self.field.grid.t_range)},
            "max_lcp_residual": self.max_lcp_residual,
            "max_negative_u": self.max_negative_u,
            "max_negative_dt_u": self.max_negative_dt_u,
            "tol_mono": self.tol_mono,
            "monotone_ok": self.monotone_ok,
            "nonstrict_monotone": self.nonstrict_monotone,
            "steps": int(its.size),
            "mean_sweeps": float(its.mean()) if its.size else 0.0,
            "max_sweeps": int(its.max()) if its.size else 0,
        }


class _Stepper:
    """Mutable stepping state for one scenario (and its companion, if any)."""

    def __init__(self, scenario: Scenario, opts: SolveOptions):
        g = scenario.grid
        self.sc = scenario
        self.opts = opts
        self.lam = g.dt / g.h**2
        self.fdt = np.ascontiguousarray(g.dt * scenario.f_nodes())
        self.bmask = g.boundary_mask()
        self.Xb = g.coords()[self.bmask]
        self.u = np.ascontiguousarray(scenario.initial_nodes())
        self.u_older = None
        self.companion = None
        if scenario.boundary_data.stateful:
            self.companion = _Stepper(scenario.companion(), opts)
            self.bprev = None

    def boundary(self, t: float) -> np.ndarray:
        if self.companion is None:
            return self.sc.boundary_data(self.Xb, t, self.sc.grid)
        line = self.companion.u
        full = np.broadcast_to(line[:, None], self.sc.grid.spatial_shape)
        vals = full[self.bmask]
        if self.bprev is not None and np.any(vals < self.bprev - _MONO_SLACK):
            raise ValidationError(f"extruded boundary data decreases in time near t = {t:.6g}")
        self.bprev = vals.copy()
        return vals

    def advance(self, k: int, t: float) -> tuple[int, float]:
        if self.companion is not None:
            self.companion.advance(k, t)
        u_prev = self.u
        if self.opts.warm_start and self.u_older is not None:
            guess = np.maximum(2.0 * u_prev - self.u_older, 0.0)
        else:
            guess = u_prev.copy()
        guess[self.bmask] = self.boundary(t)
        it, res = _kernels.psor(guess, u_prev, self.fdt, self.lam, self.opts.omega,
                                self.opts.tol_lcp, self.opts.max_sweeps, self.opts.check_every)
        if it < 0:
            raise NoConvergence(self.opts.max_sweeps, res, k)
        self.u_older = u_prev
        self.u = guess
        return it, res


def step(u_prev: np.ndarray, scenario: Scenario, t_next: float, opts: SolveOptions | None = None) -> np.ndarray:
    """One implicit Euler complementarity step from ``u_prev`` to time ``t_next``."""
    opts = opts or SolveOptions()
    g = scenario.grid
    u_prev = np.ascontiguousarray(np.asarray(u_prev, dtype=float).reshape(g.spatial_shape))
    if u_prev.min() < 0.0:
        raise ValueError("u_prev must be nonnegative")
    if scenario.boundary_data.stateful:
        raise ValueError("extruded boundary data is only available inside solve()")
    lam = g.dt / g.h**2
    fdt = np.ascontiguousarray(g.dt * scenario.f_nodes())
    mask = g.boundary_mask()
    u = u_prev.copy()
    u[mask] = scenario.boundary_data(g.coords()[mask], t_next, g)
    it, res = _kernels.psor(u, u_prev, fdt, lam, opts.omega, opts.tol_lcp, opts.max_sweeps, opts.check_every)
    if it < 0:
        raise NoConvergence(opts.max_sweeps, res)
    return u


def lcp_residual(u: np.ndarray, u_prev: np.ndarray, scenario: Scenario) -> float:
    """Interior ``max |min(u, A u + q)|`` for the dt-multiplied system."""
    g = scenario.grid
    fdt = np.ascontiguousarray(g.dt * scenario.f_nodes())
    return _kernels.lcp_residual(np.ascontiguousarray(u), np.ascontiguousarray(u_prev), fdt, g.dt / g.h**2)


def _saved_indices(scenario: Scenario) -> np.ndarray:
    g = scenario.grid
    n = g.n_time - 1
    every = scenario.save_every
    first = 0
    if scenario.output_from is not None:
        first = max(0, int(math.ceil((scenario.output_from - g.t_range[0]) / g.dt - 1e-9)))
    k0 = n - every * ((n - first) // every)
    idx = np.arange(k0, n + 1, every)
    if idx.size < 2:
        raise ValidationError("output window must contain at least two slices")
    return idx


def solve(scenario: Scenario, opts: SolveOptions | None = None) -> SolveReport:
    """Run all time steps and collect the saved slices into a :class:`ScalarField`."""
    opts = opts or SolveOptions()
    g = scenario.grid
    tol_mono = opts.tol_mono if opts.tol_mono is not None else 5.0 * g.h
    keep = _saved_indices(scenario)
    keep_set = {int(k): i for i, k in enumerate(keep)}
    out = np.empty((keep.size,) + g.spatial_shape)
    st = _Stepper(scenario, opts)
    if 0 in keep_set:
        out[keep_set[0]] = st.u
    n = g.n_time - 1
    iters = np.zeros(n, dtype=np.int64)
    max_res = 0.0
    min_u = float(min(0.0, st.u.min()))
    min_dt = 0.0
    for k in range(1, n + 1):
        t = g.time(k)
        it, res = st.advance(k, t)
        iters[k - 1] = it
        max_res = max(max_res, res)
        min_u = min(min_u, float(st.u.min()))
        min_dt = min(min_dt, float(np.min(st.u - st.u_older)) / g.dt)
        if k in keep_set:
            out[keep_set[k]] = st.u
    out_grid = g.with_time(g.dt * scenario.save_every, (g.time(int(keep[0])), g.time(int(keep[-1]))))
    if not scenario.nonstrict_monotone and min_dt < -tol_mono:
        log.warning("%s: discrete time derivative reaches %.3e below -tol_mono", scenario.name, min_dt)
    return SolveReport(
        field=ScalarField(out_grid, out),
        max_lcp_residual=max_res,
        max_negative_u=min_u,
        max_negative_dt_u=min_dt,
        iterations_per_step=iters,
        scenario=scenario,
        tol_mono=tol_mono,
        nonstrict_monotone=scenario.nonstrict_monotone,
    )


# -- contact set and singular-point location ---------------------------------------------


def contact_set(field: ScalarField, t: float, tol_contact: float = TOL_CONTACT) -> np.ndarray:
    """Indices (rows of spatial multi-indices) of nodes with ``u ≤ tol_contact`` at the slice nearest ``t``."""
    g = field.grid
    if not (g.t_range[0] - 1e-12 <= t <= g.t_range[1] + 1e-12):
        raise ValueError(f"time {t} outside field range {g.t_range}")
    k = g.nearest_time_index(t)
    return np.argwhere(field.slice(k) <= tol_contact)


def contact_mask(field: ScalarField, k: int, tol_contact: float = TOL_CONTACT) -> np.ndarray:
    return field.slice(k) <= tol_contact


@dataclass(frozen=True)
class LastContact:
    t_star: float
    x_star: np.ndarray
    k_star: int

    def to_dict(self) -> dict:
        return {"t": self.t_star, "x": self.x_star.tolist(), "k": self.k_star}


def locate_last_contact(field: ScalarField, tol_contact: float = TOL_CONTACT) -> LastContact:
    """Last slice with nonempty contact, by bisection, and the point where contact closes.

    The spatial location is the vertex of the parabola through the minimum of
    ``u`` on the first contact-free slice and its neighbours, per axis.
    """
    g = field.grid

    def has_contact(k):
        return bool(np.any(contact_mask(field, k, tol_contact)))

    lo, hi = 0, g.n_time - 1
    if not has_contact(lo):
        raise ValueError("no contact at the first stored slice")
    if has_contact(hi):
        raise ValueError("contact persists to the final slice")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if has_contact(mid):
            lo = mid
        else:
            hi = mid
    S = field.slice(hi)
    interior = tuple(slice(1, -1) for _ in range(g.dim))
    sub = S[interior]
    # ties (e.g. a whole line closing at once) resolve to the member nearest their centroid
    near_min = np.argwhere(sub <= 1.01 * sub.min() + tol_contact)
    centre = near_min.mean(axis=0)
    idx = near_min[int(np.argmin(np.sum((near_min - centre) ** 2, axis=1)))] + 1
    x = g.axis[idx].astype(float)
    for d in range(g.dim):
        lo_i = idx.copy()
        hi_i = idx.copy()
        lo_i[d] -= 1
        hi_i[d] += 1
        um, u0, up = S[tuple(lo_i)], S[tuple(idx)], S[tuple(hi_i)]
        curv = um - 2 * u0 + up
        if curv > 0:
            x[d] += 0.5 * g.h * (um - up) / curv
    return LastContact(g.time(lo), x, lo)


# -- field dump ------------------------------------------------------------------------------


def dump_field(field: ScalarField, path: str | Path) -> tuple[Path, Path]:
    """Write ``path.bin`` (little-endian float64, time-major, row-major) and ``path.json``."""
    path = Path(path)
    g = field.grid
    data = np.ascontiguousarray(field.values, dtype="<f8")
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(data.tobytes(order="C"))
    header = {"dims": list(data.shape), "dim": g.dim, "L": g.L, "h": g.h, "dt": g.dt,
              "t_range": list(g.t_range), "dtype": "float64", "byte_order": "little",
              "layout": "time-major, row-major spatial"}
    json_path = path.with_suffix(".json")
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def load_field(path: str | Path) -> ScalarField:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    data = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(header["dims"])
    grid = SpaceTimeGrid(header["dim"], header["L"], header["h"], header["dt"], tuple(header["t_range"]))
    return ScalarField(grid, data.astype(float))

