"""Command-line front end: threshold reports, simulations, reproductions, sweeps.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AllZero, EmptyCloud, InsufficientData, comparison_check, extinction_rate,
                       flatness_series, omega_distance, persistence_averages)
from .markov import sample_path
from .model import (COEFFICIENTS, EXAMPLES, InvalidEnvironment, SwitchingEnvironment,
                    bound_constants, validate)
from .pde import Grid, SnapshotSeries, StabilityViolation, simulate
from .quadrature import QuadratureError
from .switching_ode import (NoInteriorEquilibrium, ToleranceNotMet, sample_omega_set,
                            simulate_switching_logistic)
from .threshold import classify, classify_value, lambda_quadrature

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2

# reference lambda values supplied with the built-in examples; reported next to the computed
# values and never used as calibration targets
REFERENCE_LAMBDA = {"5.2": -3.0, "5.3": 38.5}


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


class NumericalFailure(RuntimeError):
    pass


_NUMERICAL = (StabilityViolation, QuadratureError, ToleranceNotMet, FloatingPointError,
              NumericalFailure, ArithmeticError)


# --- initial data ------------------------------------------------------------------------

_TERM_TYPES = ("const", "cos", "sin", "sin2", "poly")


def _term_values(term, x, length, key):
    if not isinstance(term, dict):
        raise ConfigError(key, "each term must be an object")
    kind = term.get("type")
    if kind not in _TERM_TYPES:
        raise ConfigError(f"{key}.type", f"expected one of {list(_TERM_TYPES)}, got {kind!r}")
    if kind == "const":
        return np.full_like(x, _number(term, "value", key))
    if kind == "poly":
        coeffs = term.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError(f"{key}.coeffs", "expected a non-empty list of numbers")
        try:
            cs = [float(c) for c in coeffs]
        except (TypeError, ValueError):
            raise ConfigError(f"{key}.coeffs", "coefficients must be numbers") from None
        return np.polynomial.polynomial.polyval(x, cs)
    amp = _number(term, "amp", key, 1.0)
    freq = _number(term, "freq", key, 1.0)
    arg = freq * math.pi * x / length
    if kind == "cos":
        return amp * np.cos(arg)
    if kind == "sin":
        return amp * np.sin(arg)
    return amp * np.sin(arg) ** 2


def eval_initial(spec, grid: Grid, key: str) -> np.ndarray:
    """Evaluate an initial-data spec: a term, a list of terms, or {"terms": [...], "clip": bool}.

    Terms are summed; cos/sin/sin2 use the argument freq * pi * x / L. With ``clip`` the
    result is cut at zero from below.
    """
    clip = False
    if isinstance(spec, dict) and "type" in spec:
        spec = [spec]
    terms = spec
    if isinstance(spec, dict):
        clip = bool(spec.get("clip", False))
        terms = spec.get("terms")
        key = f"{key}.terms"
    if not isinstance(terms, list) or not terms:
        raise ConfigError(key, "expected a non-empty list of terms")
    x = grid.x
    out = np.zeros_like(x)
    for k, term in enumerate(terms):
        out = out + _term_values(term, x, grid.length, f"{key}[{k}]")
    if clip:
        out = np.maximum(out, 0.0)
    if not np.all(np.isfinite(out)):
        raise ConfigError(key, "initial data is not finite on the grid")
    if np.any(out < 0):
        raise ConfigError(key, f"initial data is negative (min {out.min():.6g}); set \"clip\": true to cut at 0")
    return out


# --- configuration -----------------------------------------------------------------------

def _number(d, name, where, default=None, positive=False, integer=False):
    key = f"{where}.{name}" if where else name
    if name not in d or d[name] is None:
        if default is None:
            raise ConfigError(key, "missing")
        return default
    val = d[name]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(key, f"expected a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(key, f"expected an integer, got {val!r}")
    if not math.isfinite(val):
        raise ConfigError(key, "must be finite")
    if positive and val <= 0:
        raise ConfigError(key, f"must be positive, got {val!r}")
    return int(val) if integer else float(val)


def _section(raw, name):
    sec = raw.get(name, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected an object")
    return sec


def parse_environment(value) -> SwitchingEnvironment:
    if isinstance(value, str):
        if value not in EXAMPLES:
            raise ConfigError("environment", f"unknown example {value!r}")
        return EXAMPLES[value]
    if not isinstance(value, dict):
        raise ConfigError("environment", "expected an object or an example id")
    for side in ("plus", "minus"):
        reg = value.get(side)
        if not isinstance(reg, dict):
            raise ConfigError(f"environment.{side}", "missing or not an object")
        for name in COEFFICIENTS:
            if name in ("alpha1", "alpha2") and name not in reg:
                continue
            _number(reg, name, f"environment.{side}")
    for name in ("q_plus", "q_minus"):
        _number(value, name, "environment")
    env = SwitchingEnvironment.from_dict(value)
    try:
        validate(env)
    except InvalidEnvironment as exc:
        first = exc.problems[0]
        raise ConfigError(f"environment.{first.field}", str(exc)) from None
    return env


@dataclass
class RunConfig:
    env: SwitchingEnvironment
    grid: Grid
    initial: dict
    horizon: float
    dt: float | None
    sample_dt: float
    seed: int
    initial_state: str
    threshold: dict
    omega: dict | None
    analysis: dict
    sweep: dict | None
    normalized: dict = field(repr=False, default_factory=dict)

    @property
    def digest(self) -> str:
        return config_digest(self.normalized)

    def provenance(self) -> dict:
        return {"seed": self.seed, "config_digest": self.digest, "version": __version__}

    def header(self) -> str:
        return f"switchlv {__version__} seed={self.seed} config_digest={self.digest}"


def config_digest(normalized: dict) -> str:
    text = json.dumps(normalized, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


def parse_config(raw: dict, seed_override: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    if "environment" not in raw:
        raise ConfigError("environment", "missing")
    env = parse_environment(raw["environment"])

    g = _section(raw, "grid")
    grid_len = _number(g, "L", "grid", 1.0, positive=True)
    nx = _number(g, "nx", "grid", 101, integer=True)
    if nx < 3:
        raise ConfigError("grid.nx", "need at least 3 nodes")
    grid = Grid(grid_len, nx)

    horizon = _number(raw, "horizon", "", 50.0, positive=True)
    dt = None if raw.get("dt") is None else _number(raw, "dt", "", positive=True)
    sample_dt = _number(raw, "sample_dt", "", 0.05, positive=True)
    seed = _number(raw, "seed", "", 0, integer=True)
    if seed_override is not None:
        seed = seed_override
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    state = raw.get("initial_state", "+")
    if state not in ("+", "-"):
        raise ConfigError("initial_state", f"expected '+' or '-', got {state!r}")

    t = _section(raw, "threshold")
    threshold = {
        "crit_tol": _number(t, "crit_tol", "threshold", 1e-3, positive=True),
        "quad_tol": _number(t, "quad_tol", "threshold", 1e-12, positive=True),
        "mc_horizon": _number(t, "mc_horizon", "threshold", 1e4),
        "mc_paths": _number(t, "mc_paths", "threshold", 16, integer=True),
    }
    if threshold["mc_horizon"] < 0 or threshold["mc_paths"] < 0:
        raise ConfigError("threshold.mc_horizon", "must be nonnegative (0 disables Monte Carlo)")
    if threshold["mc_paths"] == 1:
        raise ConfigError("threshold.mc_paths", "need at least 2 paths for a standard error")

    omega = None
    if raw.get("omega") is not None:
        o = _section(raw, "omega")
        omega = {
            "depth": _number(o, "depth", "omega", 3, integer=True),
            "n_points": _number(o, "n_points", "omega", 500, integer=True, positive=True),
            "time_cap": _number(o, "time_cap", "omega", 1.0, positive=True),
            "threshold": _number(o, "threshold", "omega", 0.05, positive=True),
            "tail_fraction": _number(o, "tail_fraction", "omega", 0.5, positive=True),
        }
        if omega["depth"] < 0:
            raise ConfigError("omega.depth", "must be nonnegative")

    a = _section(raw, "analysis")
    analysis = {
        "tail_start": _number(a, "tail_start", "analysis", 0.1 * horizon),
        "tail_fraction": _number(a, "tail_fraction", "analysis", 0.5, positive=True),
        "comparison_slack": _number(a, "comparison_slack", "analysis", 1e-6, positive=True),
    }

    initial = raw.get("initial")
    if initial is not None and not isinstance(initial, dict):
        raise ConfigError("initial", "expected an object with keys u and v")

    sweep = None
    if raw.get("sweep") is not None:
        sweep = _parse_sweep(_section(raw, "sweep"))

    normalized = {
        "environment": env.to_dict(),
        "grid": {"L": grid_len, "nx": nx},
        "initial": initial,
        "horizon": horizon,
        "dt": dt,
        "sample_dt": sample_dt,
        "seed": seed,
        "initial_state": state,
        "threshold": threshold,
        "omega": omega,
        "analysis": analysis,
        "sweep": sweep,
    }
    return RunConfig(env, grid, initial or {}, horizon, dt, sample_dt, seed, state, threshold,
                     omega, analysis, sweep, normalized)


def _parse_sweep(sec):
    axes = sec.get("axes")
    if not isinstance(axes, list) or not axes:
        raise ConfigError("sweep.axes", "expected a non-empty list")
    if len(axes) > 3:
        raise ConfigError("sweep.axes", "at most 3 axes")
    out = []
    probe = EXAMPLES["5.2"]
    for k, ax in enumerate(axes):
        key = f"sweep.axes[{k}]"
        if not isinstance(ax, dict):
            raise ConfigError(key, "expected an object")
        name = ax.get("field")
        try:
            probe.get_value(str(name))
        except KeyError:
            raise ConfigError(f"{key}.field", f"unknown field {name!r}") from None
        if "values" in ax:
            vals = ax["values"]
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{key}.values", "expected a non-empty list")
            try:
                values = [float(v) for v in vals]
            except (TypeError, ValueError):
                raise ConfigError(f"{key}.values", "values must be numbers") from None
        else:
            start = _number(ax, "start", key)
            stop = _number(ax, "stop", key)
            num = _number(ax, "num", key, integer=True, positive=True)
            values = np.linspace(start, stop, num).tolist()
        if any(v <= 0 or not math.isfinite(v) for v in values):
            raise ConfigError(f"{key}.values", "all values must be positive and finite")
        out.append({"field": name, "values": values})
    return {"axes": out, "mc": bool(sec.get("mc", False))}


def load_config(path, seed_override=None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw, seed_override)


# --- output helpers ----------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _jsonable(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: Path, data: dict):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")


def write_text(path: Path, text: str):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _with_header(header: str, csv_text: str) -> str:
    return "# " + header + "\n" + csv_text


# --- pipelines ---------------------------------------------------------------------------

def run_threshold(cfg: RunConfig, workers: int = 1):
    th = cfg.threshold
    mc_h = th["mc_horizon"] if th["mc_paths"] > 0 else 0
    return classify(cfg.env, th["crit_tol"], th["quad_tol"], mc_h or None, max(th["mc_paths"], 2),
                    cfg.seed, workers)


def _initial_fields(cfg: RunConfig):
    if "u" not in cfg.initial:
        raise ConfigError("initial.u", "missing")
    if "v" not in cfg.initial:
        raise ConfigError("initial.v", "missing")
    return eval_initial(cfg.initial["u"], cfg.grid, "initial.u"), eval_initial(cfg.initial["v"], cfg.grid, "initial.v")


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs), None
    except (InsufficientData, AllZero, EmptyCloud, NoInteriorEquilibrium) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def analyze_series(series: SnapshotSeries, tail_start: float, tail_fraction: float = 0.5) -> dict:
    """Summary statistics that only need the stored snapshots."""
    out = {"n_snapshots": len(series), "horizon": float(series.times[-1]),
           "nx": series.grid.nx, "tail_start": tail_start}
    tail = series.times >= tail_start
    _, flat_u, flat_v = flatness_series(series)
    out["flatness"] = {
        "max_u": float(flat_u[tail].max()) if tail.any() else None,
        "max_v": float(flat_v[tail].max()) if (tail.any() and flat_v is not None) else None,
    }
    out["u_range_tail"] = [float(series.u[tail].min()), float(series.u[tail].max())] if tail.any() else None
    out["final_sup_u"] = float(series.u[-1].max())
    if series.v is not None:
        out["final_sup_v"] = float(series.v[-1].max())
        fit, err = _safe(extinction_rate, series, tail_fraction)
        out["extinction"] = ({"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
                              "t_lo": fit.t_lo, "t_hi": fit.t_hi, "n_samples": fit.n_samples}
                             if fit else {"error": err})
    avg, err = _safe(persistence_averages, series)
    out["persistence"] = {"avg_u": avg.avg_u, "avg_v": avg.avg_v} if avg else {"error": err}
    return out


@dataclass
class SimulationBundle:
    cfg: RunConfig
    series: SnapshotSeries
    path: object
    report: object
    analysis: dict
    cloud: object = None
    distances: object = None


def run_simulation(cfg: RunConfig, workers: int = 1) -> SimulationBundle:
    u0, v0 = _initial_fields(cfg)
    path = sample_path(cfg.env, cfg.initial_state, cfg.horizon, cfg.seed)
    series = simulate(cfg.env, u0, v0, path, dt=cfg.dt, sample_dt=cfg.sample_dt, grid=cfg.grid)
    if not (np.all(np.isfinite(series.u)) and np.all(np.isfinite(series.v))):
        raise NumericalFailure("non-finite values in the simulated fields")
    report = run_threshold(cfg, workers)

    an = cfg.analysis
    analysis = analyze_series(series, an["tail_start"], an["tail_fraction"])
    analysis["dt"] = series.dt
    analysis["n_jumps"] = path.n_jumps
    analysis["path_digest"] = path.digest()
    bounds = bound_constants(cfg.env, float(u0.max()), float(v0.max()))
    analysis["bounds"] = {
        "m1": bounds.m1, "m2": bounds.m2,
        "max_u": float(series.u.max()), "max_v": float(series.v.max()),
        "min_u": float(series.u.min()), "min_v": float(series.v.min()),
        "within": bool(series.u.min() >= 0 and series.v.min() >= 0
                       and series.u.max() <= bounds.m1 and series.v.max() <= bounds.m2),
    }
    if u0.max() > 0:
        logistic = simulate_switching_logistic(cfg.env, path, float(u0.max()), cfg.sample_dt)
        cmp_ = comparison_check(series, logistic, an["comparison_slack"])
        analysis["comparison"] = {"max_violation": cmp_.max_violation, "slack": cmp_.slack,
                                  "passed": cmp_.passed}
    analysis["threshold"] = {"lambda_quadrature": report.lambda_quadrature,
                             "lambda_mc": report.lambda_mc,
                             "lambda_mc_stderr": report.lambda_mc_stderr,
                             "classification": report.classification,
                             "delta1": report.delta1, "delta2": report.delta2}
    pers = analysis["persistence"]
    if report.delta1 is not None and "avg_u" in pers:
        pers["delta1"] = report.delta1
        pers["delta2"] = report.delta2
        pers["avg_u_ge_delta1"] = bool(pers["avg_u"] >= report.delta1)
        pers["avg_v_ge_delta2"] = bool(pers["avg_v"] >= report.delta2)

    bundle = SimulationBundle(cfg, series, path, report, analysis)
    if cfg.omega is not None:
        om = cfg.omega
        cloud, err = _safe(sample_omega_set, cfg.env, om["depth"], om["time_cap"], om["n_points"], cfg.seed)
        if cloud is None:
            analysis["omega"] = {"error": err}
        else:
            dist = omega_distance(series, cloud, om["tail_fraction"])
            hits = dist.hits(om["threshold"])
            analysis["omega"] = {"depth": om["depth"], "n_points": om["n_points"], "time_cap": om["time_cap"],
                                 "threshold": om["threshold"], "running_min": float(dist.running_min[-1]),
                                 "hits": hits}
            bundle.cloud, bundle.distances = cloud, dist
    analysis["provenance"] = cfg.provenance()
    return bundle


def write_simulation(bundle: SimulationBundle, out: Path, wide: bool = False):
    cfg = bundle.cfg
    head = cfg.header()
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "snapshots.csv", bundle.series.to_csv(head))
    write_text(out / "path.csv", _with_header(head, bundle.path.to_csv()))
    write_json(out / "analysis.json", bundle.analysis)
    write_json(out / "threshold.json", dict(bundle.report.to_dict(), provenance=cfg.provenance()))
    meta = {"grid": {"L": cfg.grid.length, "nx": cfg.grid.nx}, "dt": bundle.series.dt,
            "sample_dt": cfg.sample_dt, "horizon": cfg.horizon, "path_digest": bundle.path.digest(),
            "environment": cfg.env.to_dict(), "config": cfg.normalized, "provenance": cfg.provenance()}
    write_json(out / "meta.json", meta)
    if wide:
        write_text(out / "u_wide.csv", bundle.series.wide_csv("u", head))
        write_text(out / "v_wide.csv", bundle.series.wide_csv("v", head))
        times, fu, fv = flatness_series(bundle.series)
        rows = ["t,flat_u,flat_v"] + [f"{float(t)!r},{float(a)!r},{float(b)!r}" for t, a, b in zip(times, fu, fv)]
        write_text(out / "flatness.csv", _with_header(head, "\n".join(rows) + "\n"))
    if bundle.cloud is not None:
        write_text(out / "omega_cloud.csv", _with_header(head, bundle.cloud.to_csv()))
        d = bundle.distances
        rows = ["t,distance,running_min"] + [f"{float(t)!r},{float(a)!r},{float(b)!r}"
                                             for t, a, b in zip(d.times, d.distances, d.running_min)]
        write_text(out / "omega_distance.csv", _with_header(head, "\n".join(rows) + "\n"))


def reproduce_config(example_id: str, seed: int = 0) -> RunConfig:
    if example_id not in EXAMPLES:
        raise ConfigError("example_id", f"unknown example {example_id!r}; known: {sorted(EXAMPLES)}")
    if example_id == "5.2":
        initial = {"u": [{"type": "cos", "amp": 2.0}, {"type": "const", "value": 2.0}],
                   "v": [{"type": "sin2", "amp": 2.0}]}
        raw = {"environment": "5.2", "horizon": 50.0, "initial": initial,
               "analysis": {"tail_start": 5.0}}
    else:
        # 5 cos(pi x) + 2 dips below zero near x = 1; clipped so the data are admissible
        initial = {"u": {"terms": [{"type": "cos", "amp": 5.0}, {"type": "const", "value": 2.0}], "clip": True},
                   "v": [{"type": "sin2", "amp": 5.0}]}
        raw = {"environment": "5.3", "horizon": 200.0, "initial": initial,
               "omega": {"depth": 3, "n_points": 500, "time_cap": 1.0},
               "analysis": {"tail_start": 20.0}}
    raw.update({"grid": {"L": 1.0, "nx": 101}, "sample_dt": 0.05, "seed": seed})
    return parse_config(raw)


def _sweep_cell(args):
    env, quad_tol, crit_tol, mc, seed = args
    quad = lambda_quadrature(env, quad_tol)
    row = [quad.value, quad.error, classify_value(quad.value, crit_tol)]
    if mc:
        rep = classify(env, crit_tol, quad_tol, 1e4, 16, seed)
        row += [rep.lambda_mc, rep.lambda_mc_stderr]
    return row


def run_sweep(cfg: RunConfig, workers: int = 1):
    """Rows of (axis values..., lambda, error, class) in lexicographic axis order."""
    if cfg.sweep is None:
        raise ConfigError("sweep", "missing")
    axes = cfg.sweep["axes"]
    cells = list(itertools.product(*[ax["values"] for ax in axes]))
    jobs = []
    for k, cell in enumerate(cells):
        env = cfg.env
        for ax, val in zip(axes, cell):
            env = env.with_value(ax["field"], val)
        try:
            validate(env)
        except InvalidEnvironment as exc:
            raise ConfigError("sweep.axes", str(exc)) from None
        jobs.append((env, cfg.threshold["quad_tol"], cfg.threshold["crit_tol"], cfg.sweep["mc"], cfg.seed))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    header = [ax["field"] for ax in axes] + ["lambda_quadrature", "lambda_quadrature_err", "classification"]
    if cfg.sweep["mc"]:
        header += ["lambda_mc", "lambda_mc_stderr"]
    rows = [list(cell) + res for cell, res in zip(cells, results)]
    return header, rows


def sweep_csv(cfg: RunConfig, header, rows) -> str:
    def fmt(v):
        return repr(float(v)) if isinstance(v, (float, int, np.floating)) else str(v)

    lines = ["# " + cfg.header(), ",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# --- commands ----------------------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_threshold(args) -> int:
    cfg = load_config(args.config, args.seed)
    report = run_threshold(cfg, args.workers)
    write_json(_out_dir(args) / "threshold.json", dict(report.to_dict(), provenance=cfg.provenance()))
    print(f"lambda_quadrature={report.lambda_quadrature!r} lambda_mc={report.lambda_mc!r} "
          f"classification={report.classification}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    bundle = run_simulation(cfg, args.workers)
    write_simulation(bundle, _out_dir(args))
    _print_summary(bundle.analysis)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = reproduce_config(args.example_id, 0 if args.seed is None else args.seed)
    bundle = run_simulation(cfg, args.workers)
    computed = bundle.report.lambda_quadrature
    reference = REFERENCE_LAMBDA[args.example_id]
    bundle.analysis["reference_lambda"] = {
        "reference": reference, "computed": computed, "ratio": reference / computed,
        "same_sign": bool(math.copysign(1, reference) == math.copysign(1, computed)),
        "within_0.05": bool(abs(reference - computed) <= 0.05),
    }
    write_simulation(bundle, _out_dir(args), wide=True)
    _print_summary(bundle.analysis)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.seed)
    header, rows = run_sweep(cfg, args.workers)
    write_text(_out_dir(args) / "atlas.csv", sweep_csv(cfg, header, rows))
    print(f"{len(rows)} cells written")
    return EXIT_OK


def cmd_analyze(args) -> int:
    path = Path(args.input)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--input", f"cannot read {path}: {exc.strerror}") from None
    try:
        series = SnapshotSeries.from_csv(text)
    except (ValueError, IndexError) as exc:
        raise ConfigError("--input", f"not a snapshot CSV: {exc}") from None
    first = text.splitlines()[0] if text else ""
    tail_start = args.tail_start if args.tail_start is not None else 0.1 * float(series.times[-1])
    result = analyze_series(series, tail_start)
    result["source"] = {"file": path.name, "sha256": hashlib.sha256(text.encode()).hexdigest(),
                        "header": first[2:] if first.startswith("# ") else None}
    result["version"] = __version__
    write_json(_out_dir(args) / "analysis.json", result)
    _print_summary(result)
    return EXIT_OK


def _print_summary(analysis: dict):
    ext = analysis.get("extinction", {})
    pers = analysis.get("persistence", {})
    print(f"final_sup_v={analysis.get('final_sup_v')!r} slope={ext.get('slope')!r} "
          f"avg_u={pers.get('avg_u')!r} avg_v={pers.get('avg_v')!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switchlv",
                                description="Predator-prey reaction-diffusion under Markovian switching")
    p.add_argument("--version", action="version", version=f"switchlv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--workers", type=int, default=1, help="worker processes for MC paths and sweep cells")

    common(sub.add_parser("threshold", help="threshold report (quadrature + Monte Carlo)"))
    common(sub.add_parser("simulate", help="simulate the PDE and analyse the trajectory"))
    rp = sub.add_parser("reproduce", help="rerun one of the built-in examples")
    rp.add_argument("example_id")
    common(rp, config=False)
    common(sub.add_parser("sweep", help="threshold atlas over a parameter grid"))
    ap = sub.add_parser("analyze", help="re-run the analysis on a stored snapshot CSV")
    ap.add_argument("--input", required=True, help="snapshot CSV written by simulate")
    ap.add_argument("--tail-start", type=float, default=None)
    common(ap, config=False)
    return p


COMMANDS = {"threshold": cmd_threshold, "simulate": cmd_simulate, "reproduce": cmd_reproduce,
            "sweep": cmd_sweep, "analyze": cmd_analyze}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
