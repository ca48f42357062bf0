"""Command-line orchestration: solve, classify, trace, check and box-count, then write reports.

Reports are canonical JSON (sorted keys) and traces are CSV, so two runs of
the same configuration produce byte-identical files whatever ``--threads``
is.  Wall-clock timings are the one nondeterministic output and go to a
separate ``timings.log``.

Exit status: 0 when every enabled check passed, 1 when a check failed, 2 on a
configuration or stage error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FblabError, NoisyTail, SchemaError, ValidationError
from .fixtures import PolyP, constant_field, monomial_field, polyp_difference_field, random_polyp
from .functionals import GaussQuad, functional_D, functional_H, verify_derivative_identities, weighted_inner
from .monitor import (
    CheckReport,
    FunctionalTrace,
    bootstrap,
    bootstrap_monotone,
    check_cleaning,
    check_cubic,
    check_doubling,
    check_frequency,
    check_L2_decay,
    check_monneau,
    check_weiss,
    epsilon_for,
    estimate_lambda,
    trace,
)
from .pardim import DimensionEstimate, ParPointSet, dwell_time, estimate_dimension, par_dist, resolved_deltas
from .singular import PointClass, Singular, SingularSetOptions, classify, singular_set
from .solver import Scenario, SolveReport, builtin_document, dump_field, locate_last_contact, scenario_from_dict, solve

log = logging.getLogger("fblab")

STAGES = ("solve", "classify", "trace", "checks", "dimension")
_REQUIRES = {"classify": "solve", "trace": "classify", "checks": "trace", "dimension": "classify"}
SUBCOMMAND_STAGES = {
    "solve": ("solve",),
    "analyze": ("solve", "classify", "trace", "checks"),
    "dimension": ("solve", "classify", "dimension"),
    "all": STAGES,
}
DEFAULT_CEILINGS = {"cubic": 20.0, "weiss": 5.0, "frequency": 10.0, "monneau": 2.0, "doubling": 5.0,
                    "flatness": 4.0}
DIMENSION_SLACK = 0.3


# -- configuration -----------------------------------------------------------------------


@dataclass
class RunConfig:
    scenario: Scenario
    scenario_doc: dict
    pipeline: list
    output_dir: Path
    seed: int = 0
    threads: int = 1

    def stage(self, name: str) -> dict | None:
        for st in self.pipeline:
            if st["stage"] == name:
                return st
        return None

    def echo(self) -> dict:
        """Configuration as recorded in the report; runtime knobs (paths, threads) are left out."""
        return {"scenario": self.scenario_doc, "pipeline": self.pipeline, "seed": self.seed}


def default_pipeline(scenario_doc: dict) -> list[dict]:
    """Full pipeline with defaults taken from the scenario's ``analysis`` block, if any."""
    an = scenario_doc.get("analysis", {})
    return [
        {"stage": "solve"},
        {"stage": "classify", "points": an.get("points", "auto"), "t_window": an.get("t_window"),
         "max_points": an.get("max_points", 1)},
        {"stage": "trace", "gammas": an.get("gammas", [2.25])},
        {"stage": "checks", "ceilings": {**DEFAULT_CEILINGS, **scenario_doc.get("ceilings", {})},
         "saturation": an.get("saturation"), "cleaning_epsilon": an.get("cleaning_epsilon", 0.5),
         "decay": an.get("decay", {"gamma": 2.5, "delta": 0.2})},
        {"stage": "dimension", "delta_max": an.get("delta_max", 0.25), "slack": DIMENSION_SLACK},
    ]


def parse_config(document: dict, resolution: float | None = None) -> RunConfig:
    """Validate a run configuration eagerly, including every scenario invariant."""
    if not isinstance(document, dict):
        raise SchemaError("", "configuration must be a JSON object")
    sc = document.get("scenario")
    if isinstance(sc, str):
        try:
            sc_doc = builtin_document(sc)
        except KeyError as exc:
            raise SchemaError("/scenario", str(exc)) from exc
    elif isinstance(sc, dict):
        sc_doc = copy.deepcopy(sc)
    else:
        raise SchemaError("/scenario", "expected a builtin scenario name or an inline object")
    if resolution is not None:
        sc_doc["h"] = float(resolution)
        sc_doc.pop("dt", None)
    scenario = scenario_from_dict(sc_doc, pointer="/scenario", validate=True)
    pipeline = document.get("pipeline")
    if pipeline is None:
        pipeline = default_pipeline(sc_doc)
    if not isinstance(pipeline, list):
        raise SchemaError("/pipeline", "expected a list of stage objects")
    seen = set()
    for i, st in enumerate(pipeline):
        if not isinstance(st, dict) or st.get("stage") not in STAGES:
            raise SchemaError(f"/pipeline/{i}", f"stage must be one of {list(STAGES)}")
        need = _REQUIRES.get(st["stage"])
        if need and need not in seen:
            raise SchemaError(f"/pipeline/{i}", f"stage {st['stage']!r} requires {need!r} earlier")
        seen.add(st["stage"])
    threads = document.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        raise SchemaError("/threads", "threads must be a positive integer")
    return RunConfig(scenario, sc_doc, copy.deepcopy(pipeline), Path(document.get("output_dir", "out")),
                     int(document.get("seed", 0)), threads)


# -- report -------------------------------------------------------------------------------


@dataclass
class RunReport:
    config: dict
    solve: dict | None = None
    last_contact: dict | None = None
    classification: dict | None = None
    base_points: list = field(default_factory=list)
    traces: list = field(default_factory=list)  # (label, FunctionalTrace)
    checks: list = field(default_factory=list)  # (label, CheckReport)
    lambdas: list = field(default_factory=list)
    saturation: list = field(default_factory=list)
    dimension: DimensionEstimate | None = None
    notices: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for _, c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        return 0 if self.all_passed else 1

    def to_dict(self) -> dict:
        return _canon({
            "config": self.config,
            "solve": self.solve,
            "last_contact": self.last_contact,
            "classification": self.classification,
            "base_points": self.base_points,
            "traces": [{"label": lab, **tr.to_dict()} for lab, tr in self.traces],
            "lambda_estimates": self.lambdas,
            "checks": [{"label": lab, **c.to_dict()} for lab, c in self.checks],
            "saturation": self.saturation,
            "dimension": None if self.dimension is None else self.dimension.to_dict(),
            "notices": self.notices,
            "errors": self.errors,
            "all_passed": self.all_passed,
            "manifest": self.manifest,
        })


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return obj


def dumps(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


# -- stages -------------------------------------------------------------------------------


@dataclass
class _State:
    u: object = None  # the solved ScalarField
    solve_report: SolveReport | None = None
    points: list = field(default_factory=list)  # PointClass per base point
    singular: ParPointSet | None = None
    traces: list = field(default_factory=list)  # (label, point index, FunctionalTrace)


def _f_fn(scenario: Scenario):
    return lambda X: scenario.f_spec(np.atleast_2d(X), scenario.grid)


def _stage_solve(cfg: RunConfig, st: dict, state: _State, rep: RunReport):
    res = solve(cfg.scenario)
    state.u = res.field
    state.solve_report = res
    rep.solve = res.summary()
    if st.get("dump_field"):
        dump_field(res.field, cfg.output_dir / "field")


def _point_key(pc: PointClass, anchor):
    return (par_dist((pc.x0, pc.t0), anchor), float(pc.t0), tuple(np.asarray(pc.x0).tolist()))


def _stage_classify(cfg: RunConfig, st: dict, state: _State, rep: RunReport):
    F = state.u
    g = F.grid
    try:
        lc = locate_last_contact(F)
        rep.last_contact = lc.to_dict()
    except ValueError as exc:
        lc = None
        rep.notices.append(f"no last-contact time: {exc}")
    window = st.get("t_window")
    if window is None and lc is not None:
        window = [lc.t_star - 0.01, g.t_range[1]]
    opts = SingularSetOptions(t_window=None if window is None else tuple(window), threads=cfg.threads)
    ss = singular_set(F, _f_fn(cfg.scenario), opts)
    state.singular = ss.singular
    summary = ss.to_dict()
    summary["t_window"] = window
    summary["n_singular"] = len(ss.points)
    rep.classification = summary
    f_fn = _f_fn(cfg.scenario)
    pts = st.get("points", "auto")
    if pts == "auto":
        anchor = (lc.x_star, lc.t_star) if lc is not None else (np.zeros(g.dim), g.t_range[1])
        ranked = sorted(ss.points, key=lambda pc: _point_key(pc, anchor))
        chosen = []
        if lc is not None:
            # the located closing point itself, when it classifies singular, is the preferred base
            try:
                pc = classify(F, lc.x_star, lc.t_star, float(f_fn(lc.x_star[None, :])[0]))
                if isinstance(pc, Singular):
                    chosen.append(pc)
            except FblabError as exc:
                rep.notices.append(f"classification at the last-contact point failed: {exc}")
        chosen.extend(ranked)
        state.points = chosen[: int(st.get("max_points", 1))]
        if not state.points:
            rep.notices.append("no singular base point found; trace and check stages have nothing to do")
    else:
        for i, p in enumerate(pts):
            x = np.atleast_1d(np.asarray(p["x"], dtype=float))
            state.points.append(classify(F, x, float(p["t"]), float(f_fn(x[None, :])[0]), check_free_boundary=False))
    rep.base_points = [pc.to_dict() for pc in state.points]


def _p_for(pc: PointClass) -> PolyP:
    fit = pc.decisive
    return fit.snapped()


def _stage_trace(cfg: RunConfig, st: dict, state: _State, rep: RunReport):
    gammas = [float(g) for g in st.get("gammas", [2.25])]
    jobs = [(i, pc, g) for i, pc in enumerate(state.points) if pc.decisive is not None for g in gammas]

    def work(job):
        i, pc, g = job
        return (f"p{i}_g{g:g}", i, trace(state.u, pc.x0, pc.t0, _p_for(pc), g))

    state.traces = _map(work, jobs, cfg.threads)
    rep.traces = [(lab, tr) for lab, _, tr in state.traces]


def _map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _trace_checks(tr: FunctionalTrace, pc: PointClass, h: float, ceil: dict, notices: list):
    out = [check_cubic(tr, ceil["cubic"])]
    fit = pc.decisive
    tol_W = 10.0 * (h + fit.residual_quadratic) if isinstance(pc, Singular) else None
    out.append(check_weiss(tr, ceil["weiss"], tol_W=tol_W))
    if epsilon_for(tr.gamma) > 0:
        out.append(check_frequency(tr, "base", ceiling=ceil["frequency"]))
    else:
        notices.append(f"base frequency rule needs gamma < 2.5; skipped at gamma = {tr.gamma:g}")
    out.append(check_monneau(tr, ceil["monneau"]))
    try:
        lam = estimate_lambda(tr)
        lam_d = lam.to_dict()
    except NoisyTail as exc:
        lam = exc.estimate
        lam_d = {**lam.to_dict(), "noisy": True}
        notices.append(f"noisy frequency tail at gamma = {tr.gamma:g}: {exc}")
    out.append(check_doubling(tr, lam.value, 0.2, ceiling=ceil["doubling"]))
    return out, lam_d


def _stage_checks(cfg: RunConfig, st: dict, state: _State, rep: RunReport):
    ceil = {**DEFAULT_CEILINGS, **st.get("ceilings", {})}
    h = state.u.grid.h

    def per_trace(job):
        lab, i, tr = job
        notes = []
        res, lam = _trace_checks(tr, state.points[i], h, ceil, notes)
        return lab, res, lam, notes

    for lab, res, lam, notes in _map(per_trace, state.traces, cfg.threads):
        rep.checks.extend((lab, c) for c in res)
        rep.lambdas.append({"label": lab, **lam})
        rep.notices.extend(notes)

    decay = st.get("decay") or {"gamma": 2.5, "delta": 0.2}
    sat = st.get("saturation")
    eps_clean = float(st.get("cleaning_epsilon", 0.5))
    for i, pc in enumerate(state.points):
        if not isinstance(pc, Singular):
            rep.notices.append(f"base point {i} is not singular; decay, cleaning and saturation skipped")
            continue
        p = _p_for(pc)
        lab = f"p{i}"
        tr = trace(state.u, pc.x0, pc.t0, p, float(decay["gamma"]))
        try:
            lam_star = estimate_lambda(tr).value
        except NoisyTail as exc:
            lam_star = exc.estimate.value
        rep.checks.append((lab, check_L2_decay(state.u, pc.x0, pc.t0, lam_star, float(decay["delta"]), p)))
        rep.checks.append((lab, check_cleaning(state.u, pc.x0, pc.t0, eps_clean, pc,
                                               flatness_ceiling=ceil["flatness"])))
        if sat:
            rep.checks.append((lab, _saturation(state.u, pc, p, sat, rep)))


def _saturation(F, pc: Singular, p: PolyP, sat: dict, rep: RunReport) -> CheckReport:
    gammas = [float(g) for g in sat.get("schedule", [2.25, 2.5, 2.75])]
    target = float(sat.get("gamma", 2.5))
    slack = float(sat.get("slack", 0.2))
    stages = bootstrap(F, pc.x0, pc.t0, p, gammas, float(sat.get("delta", 0.2)))
    rep.saturation.append({"x0": np.asarray(pc.x0).tolist(), "t0": pc.t0, "stages": [s.to_dict() for s in stages]})
    at = [s for s in stages if abs(s.gamma - target) < 1e-12]
    if not at:
        raise ValidationError(f"saturation target gamma {target} is not in the schedule {gammas}")
    gap = target - at[0].lambda_hat
    mono = bootstrap_monotone(stages)
    return CheckReport("saturation", gap, slack, bool(gap <= slack and mono), slack - gap,
                       {"gamma": target, "lambda_hat": at[0].lambda_hat, "monotone": mono,
                        "certified": [s.certified_exponent for s in stages]})


def _stage_dimension(cfg: RunConfig, st: dict, state: _State, rep: RunReport):
    pset = state.singular
    g = state.u.grid
    if pset is None or len(pset) < 2:
        rep.notices.append("singular set has fewer than two points; dimension stage skipped")
        return
    tau = dwell_time(pset)
    deltas = st.get("deltas") or resolved_deltas(g.h, tau, float(st.get("delta_max", 0.25)))
    est = estimate_dimension(pset, deltas)
    rep.dimension = est
    bound = g.dim - 1 + float(st.get("slack", DIMENSION_SLACK))
    rep.checks.append(("singular_set", CheckReport(
        "dimension", est.slope, bound, bool(est.slope <= bound), bound - est.slope,
        {"n_points": len(pset), "r2": est.r2, "time_sampling": tau,
         "note": "box-counting slope is evidence consistent with the bound, not a verification"})))


_STAGE_FN = {"solve": _stage_solve, "classify": _stage_classify, "trace": _stage_trace,
             "checks": _stage_checks, "dimension": _stage_dimension}


def run(cfg: RunConfig, stages: tuple = STAGES) -> RunReport:
    """Execute the enabled stages in order; the report is written even when a stage fails."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    rep = RunReport(config=cfg.echo())
    state = _State()
    try:
        for st in cfg.pipeline:
            name = st["stage"]
            if name not in stages:
                continue
            t0 = time.perf_counter()
            log.info("stage %s", name)
            try:
                _STAGE_FN[name](cfg, st, state, rep)
            except (FblabError, ValueError, ArithmeticError) as exc:
                rep.errors.append({"stage": name, "type": type(exc).__name__, "message": str(exc)})
                log.error("stage %s failed: %s", name, exc)
                break
            finally:
                rep.timings[name] = time.perf_counter() - t0
    finally:
        emit_plot_data(rep, cfg.output_dir)
        _write_report(rep, cfg.output_dir)
    return rep


# -- outputs ------------------------------------------------------------------------------


def _write(path: Path, text: str, manifest: dict):
    path.write_text(text)
    manifest[path.name] = len(text.encode())


def emit_plot_data(rep: RunReport, out_dir: Path) -> list[Path]:
    """One CSV per trace, one CSV of (log 1/δ, log N) and a JSON index of what was written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    index = {"traces": [], "dimension": None}
    for lab, tr in rep.traces:
        name = f"trace_{lab}.csv"
        _write(out_dir / name, tr.to_csv(), files)
        index["traces"].append({"file": name, "label": lab, "gamma": tr.gamma,
                                "x0": np.asarray(tr.x0).tolist(), "t0": tr.t0})
    if rep.dimension is not None:
        d = rep.dimension
        lines = ["log_inv_delta,log_count"]
        lines += [f"{math.log(1.0 / a)!r},{math.log(max(n, 1))!r}" for a, n in zip(d.deltas, d.counts)]
        _write(out_dir / "dimension.csv", "\n".join(lines) + "\n", files)
        index["dimension"] = "dimension.csv"
    index["manifest"] = dict(files)
    _write(out_dir / "plot_index.json", dumps(index), files)
    rep.manifest.update(files)
    return [out_dir / n for n in files]


def _write_report(rep: RunReport, out_dir: Path):
    (out_dir / "report.json").write_text(dumps(rep.to_dict()))
    lines = [f"{k}\t{v:.3f}s" for k, v in rep.timings.items()]
    (out_dir / "timings.log").write_text("\n".join(lines) + "\n")


# -- analytic verification ----------------------------------------------------------------


def verify_suite(out_dir: Path | None = None) -> RunReport:
    """Quadrature oracles and derivative identities on closed-form fields; no solve involved."""
    rep = RunReport(config={"verify": True})
    t0 = time.perf_counter()
    one = constant_field(2, 1.0)
    x1 = monomial_field(2, 0)
    p2 = PolyP(np.diag([1.0, 0.0]), 1.0)
    p = PolyP(np.diag([0.0, 1.0]), 1.0)
    w = polyp_difference_field(p2, p)
    quad = GaussQuad.create(2)
    errs = {
        "unit_mass": abs(weighted_inner(one, one, 0.3, quad) - 1.0),
        "second_moment": abs(weighted_inner(x1, x1, 1.0, quad) - 2.0),  # <x1², 1> = <x1, x1>
        "H": abs(functional_H(w, 1.0, quad) - 4.0),
        "D": abs(functional_D(w, 1.0, quad) - 8.0),
    }
    tol = {"unit_mass": 1e-12, "second_moment": 1e-8, "H": 1e-8, "D": 1e-8}
    for k, e in errs.items():
        rep.checks.append(("oracle", CheckReport(k, e, tol[k], bool(e <= tol[k]), tol[k] - e)))
    dr = 1e-3
    lim = max(1e-8, 2 * dr * dr)
    for name, fld in (("p2_minus_p", w), ("x1", x1), ("constant", one)):
        for r in (0.0625, 0.25, 0.5):
            ir = verify_derivative_identities(fld, r, dr, quad)
            worst = max(ir.residuals)
            rep.checks.append((f"{name}@{r:g}", CheckReport("identities", worst, lim, bool(worst <= lim),
                                                            lim - worst)))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        a, b = random_polyp(rng, 2, 1.0), random_polyp(rng, 2, 1.0)
        ww = polyp_difference_field(a, b)
        H, D = functional_H(ww, 1.0, quad), functional_D(ww, 1.0, quad)
        worst = max(worst, abs(D - 2 * H) / max(D + 2 * H, 1e-300))
    rep.checks.append(("random_pairs", CheckReport("weiss_structure", worst, 1e-8, bool(worst <= 1e-8),
                                                   1e-8 - worst)))
    rep.timings["verify"] = time.perf_counter() - t0
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _write_report(rep, Path(out_dir))
    return rep


# -- entry point --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fblab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "analyze", "verify", "dimension", "all"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration (or a builtin scenario name)")
        sp.add_argument("--out", help="output directory (overrides the configuration)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for independent jobs")
        sp.add_argument("--resolution", type=float, default=None, help="spatial step h (dt becomes h²)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load_document(spec: str) -> dict:
    path = Path(spec)
    if path.is_file():
        return json.loads(path.read_text())
    return {"scenario": spec}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "verify":
            rep = verify_suite(Path(args.out) if args.out else None)
        else:
            if not args.config:
                raise SchemaError("", "--config is required")
            doc = _load_document(args.config)
            if args.out:
                doc["output_dir"] = args.out
            if args.threads is not None:
                doc["threads"] = args.threads
            cfg = parse_config(doc, args.resolution)
            rep = run(cfg, SUBCOMMAND_STAGES[args.command])
    except (SchemaError, ValidationError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for lab, c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {lab:>16s}  {c.name:<16s} C={c.fitted_constant:.4g}  limit={c.ceiling:.4g}")
    for e in rep.errors:
        print(f"ERROR {e['stage']}: {e['type']}: {e['message']}", file=sys.stderr)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
