"""Spatially homogeneous companions of the switching PDE.

The switching logistic equation y' = y (a(xi) - b(xi) y) is integrated exactly,
segment by segment, using its closed-form flow. The Lotka-Volterra flows of each
regime are integrated with an adaptive embedded Runge-Kutta pair.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np
from scipy.integrate import solve_ivp

from .markov import MarkovPath, make_rng
from .model import RegimeParams, SwitchingEnvironment, validate


class ToleranceNotMet(RuntimeError):
    pass


class NoInteriorEquilibrium(ValueError):
    pass


def logistic_flow(a, b, y0, t):
    """Exact time-``t`` map of y' = y (a - b y); broadcasts over array arguments.

    Uses 1/y(t) = b/a + (1/y0 - b/a) e^{-at}, which cannot overflow at long times and
    keeps the equilibrium a/b fixed exactly.
    """
    a = np.asarray(a, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    c = b / a
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = 1.0 / (c + (1.0 / y0 - c) * np.exp(-a * t))
    out = np.where(y0 == 0, 0.0, out)
    return out if out.ndim else float(out)


def logistic_integral(a, b, y0, h):
    """Closed form of the integral of the logistic solution over [0, h]."""
    a = np.asarray(a, dtype=float)
    x = a * h
    r = b * y0 / a
    return (x + np.log1p((1.0 - r) * np.expm1(-x))) / b


def sample_times(horizon: float, sample_dt: float, jump_times=()) -> np.ndarray:
    """Multiples of ``sample_dt`` in [0, horizon], the horizon itself, and every jump time."""
    if sample_dt <= 0:
        raise ValueError("sample_dt must be positive")
    n = int(math.floor(horizon / sample_dt + 1e-9))
    grid = np.arange(n + 1) * sample_dt
    grid = grid[grid <= horizon]
    return np.unique(np.concatenate((grid, np.asarray(jump_times, dtype=float), [horizon])))


@dataclass(frozen=True)
class PathSegments:
    """Constant-regime pieces of a path with the exact logistic value at each piece start."""

    starts: np.ndarray
    lengths: np.ndarray
    plus: np.ndarray
    a: np.ndarray
    b: np.ndarray
    y_start: np.ndarray
    y_end: float


def logistic_segments(env: SwitchingEnvironment, path: MarkovPath, y0: float,
                      t_start: float = 0.0) -> PathSegments:
    """Propagate y along ``path`` and cut the result to the window [t_start, horizon]."""
    starts, ends, plus = path.segments()
    a = np.where(plus, env.plus.a, env.minus.a)
    b = np.where(plus, env.plus.b, env.minus.b)
    h = ends - starts
    if y0 == 0:
        y_start = np.zeros_like(starts)
        y_end = 0.0
    else:
        # 1/y obeys the affine recursion z -> b/a + (z - b/a) e^{-ah}
        decay = np.exp(-a * h)
        level = b / a
        z = list(accumulate(zip(decay.tolist(), level.tolist()),
                            lambda z_, dc: dc[1] + (z_ - dc[1]) * dc[0], initial=1.0 / y0))
        z = np.asarray(z)
        y_start = 1.0 / z[:-1]
        y_end = float(1.0 / z[-1])
    if t_start > 0:
        keep = ends > t_start
        starts, ends, plus, a, b, y_start = (arr[keep] for arr in (starts, ends, plus, a, b, y_start))
        if starts.size and starts[0] < t_start:
            y_start = y_start.copy()
            y_start[0] = logistic_flow(a[0], b[0], y_start[0], t_start - starts[0])
            starts = starts.copy()
            starts[0] = t_start
    return PathSegments(starts, ends - starts, plus, a, b, y_start, y_end)


@dataclass(frozen=True, eq=False)
class LogisticTrajectory:
    times: np.ndarray
    values: np.ndarray
    states: np.ndarray
    path: MarkovPath = field(repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "y", "state"])
        for t, y, s in zip(self.times, self.values, self.states):
            w.writerow([repr(float(t)), repr(float(y)), s])
        return buf.getvalue()


def simulate_switching_logistic(env: SwitchingEnvironment, path: MarkovPath, y0: float,
                                sample_dt: float) -> LogisticTrajectory:
    validate(env)
    if y0 <= 0:
        raise ValueError("y0 must be positive")
    seg = logistic_segments(env, path, y0)
    times = sample_times(path.horizon, sample_dt, path.jump_times)
    idx = np.searchsorted(seg.starts, times, side="right") - 1
    values = logistic_flow(seg.a[idx], seg.b[idx], seg.y_start[idx], times - seg.starts[idx])
    values = np.atleast_1d(values)
    states = np.atleast_1d(path.state_at(times))
    return LogisticTrajectory(times, values, states, path)


def occupation_cdf(env: SwitchingEnvironment, path: MarkovPath, y0: float, levels,
                   t_start: float = 0.0):
    """Exact fraction of time in each regime with y(t) <= level, over [t_start, horizon].

    Uses the monotonicity of the logistic flow on each segment: the crossing time of a
    level is available in closed form. Returns ``(cdf_plus, cdf_minus)`` conditional on
    the regime, each an array over ``levels``.
    """
    seg = logistic_segments(env, path, y0, t_start)
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    a, b, ys, h = seg.a, seg.b, seg.y_start, seg.lengths
    cap = a / b
    rising = ys < cap
    falling = ys > cap
    plus = seg.plus
    tp = np.sum(h[plus])
    tm = np.sum(h[~plus])
    low_plus = np.empty(levels.size)
    low_minus = np.empty(levels.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j, c in enumerate(levels):
            cross = np.log(c * (a - b * ys) / (ys * (a - b * c))) / a
            cross = np.where(np.isfinite(cross), np.clip(cross, 0.0, None), np.inf)
            t_rise = np.where(c >= cap, h, np.where(c <= ys, 0.0, np.minimum(cross, h)))
            t_fall = np.where(c >= ys, h, np.where(c <= cap, 0.0, h - np.minimum(cross, h)))
            t_flat = np.where(c >= cap, h, 0.0)
            below = np.where(rising, t_rise, np.where(falling, t_fall, t_flat))
            low_plus[j] = below[plus].sum()
            low_minus[j] = below[~plus].sum()
    cdf_plus = low_plus / tp if tp > 0 else np.full(levels.size, np.nan)
    cdf_minus = low_minus / tm if tm > 0 else np.full(levels.size, np.nan)
    return cdf_plus, cdf_minus


# --- deterministic Lotka-Volterra flows -------------------------------------------------

def lv_field(regime: RegimeParams, u, v):
    return (u * (regime.a - regime.b * u - regime.c * v),
            v * (-regime.d + regime.e * u - regime.f * v))


def lv_flow(regime: RegimeParams, u0: float, v0: float, t: float, tol: float = 1e-9):
    """Time-``t`` map of the regime's Lotka-Volterra ODE.

    Integrated with Dormand-Prince 5(4) in log coordinates, where the per-capita rates
    are smooth and bounded; the tolerance then acts relatively even next to the axes.
    The invariant axes u = 0 and v = 0 are integrated in closed form.
    """
    if u0 < 0 or v0 < 0 or t < 0:
        raise ValueError("lv_flow needs u0, v0, t >= 0")
    if t == 0:
        return float(u0), float(v0)
    r = regime
    if u0 == 0 or v0 == 0:
        u = logistic_flow(r.a, r.b, u0, t) if u0 > 0 else 0.0
        v = _decay_flow(r.d, r.f, v0, t) if v0 > 0 else 0.0
        return float(u), float(v)

    def rhs(_s, z):
        u, v = np.exp(z)
        return [r.a - r.b * u - r.c * v, -r.d + r.e * u - r.f * v]

    sol = solve_ivp(rhs, (0.0, t), [math.log(u0), math.log(v0)], method="RK45", rtol=tol, atol=tol)
    if sol.status != 0:
        raise ToleranceNotMet(sol.message)
    zu, zv = sol.y[:, -1]
    return math.exp(zu), math.exp(zv)


def _decay_flow(d, f, v0, t):
    # v' = -v (d + f v): 1/v(t) = (1/v0 + f/d) e^{dt} - f/d
    with np.errstate(over="ignore"):
        return float(1.0 / ((1.0 / v0 + f / d) * math.exp(min(d * t, 700.0)) - f / d))


@dataclass(frozen=True)
class Equilibrium:
    u_star: float
    v_star: float
    interior: bool
    degenerate: bool = False


def equilibrium(regime: RegimeParams) -> Equilibrium:
    """Attracting equilibrium of the regime's ODE: interior iff a e > b d, else (a/b, 0)."""
    r = regime
    lhs, rhs = r.a * r.e, r.b * r.d
    if lhs > rhs:
        den = r.b * r.f + r.c * r.e
        return Equilibrium((r.a * r.f + r.c * r.d) / den, (r.a * r.e - r.b * r.d) / den, True)
    return Equilibrium(r.a / r.b, 0.0, False, degenerate=(lhs == rhs))


@dataclass(frozen=True, eq=False)
class OmegaSetSample:
    """Points of alternating flow compositions started at the + regime's interior equilibrium.

    ``depths[k]`` counts the flows applied after the initial + flow and ``times[k]`` holds
    all of that point's flow times (t_0 first).
    """

    points: np.ndarray
    depths: np.ndarray
    times: tuple
    depth: int
    time_cap: float
    seed: int

    def __len__(self):
        return len(self.points)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "u", "v", "depth", "times"])
        for k, ((u, v), d, ts) in enumerate(zip(self.points, self.depths, self.times)):
            w.writerow([k, repr(float(u)), repr(float(v)), int(d), ";".join(repr(float(t)) for t in ts)])
        return buf.getvalue()


def compose_flows(env: SwitchingEnvironment, times, tol: float = 1e-9):
    """Apply pi^+_{t_0}, then pi^-_{t_1}, pi^+_{t_2}, ... to (u*_+, v*_+)."""
    eq = equilibrium(env.plus)
    if not eq.interior:
        raise NoInteriorEquilibrium("the + regime has no interior equilibrium")
    u, v = eq.u_star, eq.v_star
    for k, t in enumerate(times):
        reg = env.plus if k % 2 == 0 else env.minus
        u, v = lv_flow(reg, u, v, float(t), tol)
    return u, v


def sample_omega_set(env: SwitchingEnvironment, depth: int = 3, time_cap: float = 1.0,
                     n_points: int = 500, seed: int = 0, tol: float = 1e-9,
                     fixed_depth: bool = False) -> OmegaSetSample:
    """Random point cloud from the set of alternating flow compositions.

    Each point draws its composition length uniformly from 0..depth (exactly ``depth``
    when ``fixed_depth``) and its flow times uniformly from [0, time_cap].
    """
    validate(env)
    if not equilibrium(env.plus).interior:
        raise NoInteriorEquilibrium("the + regime has no interior equilibrium")
    if depth < 0 or time_cap <= 0 or n_points < 1:
        raise ValueError("need depth >= 0, time_cap > 0, n_points >= 1")
    rng = make_rng(seed)
    if fixed_depth:
        depths = np.full(n_points, depth, dtype=int)
    else:
        depths = rng.integers(0, depth + 1, size=n_points)
    all_times = rng.uniform(0.0, time_cap, size=(n_points, depth + 1))
    points = np.empty((n_points, 2))
    times = []
    for k in range(n_points):
        ts = tuple(float(t) for t in all_times[k, : depths[k] + 1])
        points[k] = compose_flows(env, ts, tol)
        times.append(ts)
    return OmegaSetSample(points, depths, tuple(times), depth, time_cap, seed)
