"""1-D hybrid reaction-diffusion solver with homogeneous Neumann boundaries.

Each step is Strang-split: a half step of the pointwise Lotka-Volterra reaction
(explicit Heun), a full Crank-Nicolson diffusion step per species, and another
reaction half step. Steps never straddle a jump of the environment.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .markov import MarkovPath
from .model import BoundConstants, RegimeParams, SwitchingEnvironment, bound_constants, validate
from .switching_ode import sample_times


class StabilityViolation(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    length: float = 1.0
    nx: int = 101

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError("grid needs at least 3 nodes")
        if self.length <= 0:
            raise ValueError("grid length must be positive")

    @property
    def dx(self) -> float:
        return self.length / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.nx)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.nx, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def mean(self, values) -> np.ndarray:
        """Trapezoid spatial mean along the last axis."""
        return np.asarray(values) @ self.trapezoid_weights() / self.length


@dataclass
class SimState:
    t: float
    regime: str
    u: np.ndarray
    v: np.ndarray | None
    grid: Grid


def laplacian_neumann(values, dx: float) -> np.ndarray:
    """Second difference with ghost-point reflection at both ends."""
    f = np.asarray(values, dtype=float)
    if f.shape[-1] < 3:
        raise ValueError("need at least 3 nodes")
    out = np.empty_like(f)
    out[..., 1:-1] = f[..., :-2] - 2.0 * f[..., 1:-1] + f[..., 2:]
    out[..., 0] = 2.0 * (f[..., 1] - f[..., 0])
    out[..., -1] = 2.0 * (f[..., -2] - f[..., -1])
    return out / dx ** 2


def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system by Thomas elimination.

    ``lower[i]`` multiplies x[i-1] in row i (``lower[0]`` unused), ``upper[i]`` multiplies
    x[i+1] (``upper[-1]`` unused). ``rhs`` may carry trailing axes for several right-hand sides.
    """
    n = len(diag)
    rhs = np.asarray(rhs, dtype=float)
    cp = np.empty(n)
    dp = np.empty_like(rhs)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
    x = np.empty_like(rhs)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _cn_bands(nx: int, r: float):
    """Bands of I - (r/2) A for the Neumann Laplacian A (scaled by dx^2)."""
    lower = np.full(nx, -0.5 * r)
    upper = np.full(nx, -0.5 * r)
    diag = np.full(nx, 1.0 + r)
    upper[0] = -r
    lower[-1] = -r
    return lower, diag, upper


def _cn_explicit(f, r):
    """(I + (r/2) A) f along the first axis."""
    out = np.empty_like(f)
    out[1:-1] = f[1:-1] + 0.5 * r * (f[:-2] - 2.0 * f[1:-1] + f[2:])
    out[0] = f[0] + r * (f[1] - f[0])
    out[-1] = f[-1] + r * (f[-2] - f[-1])
    return out


def diffusion_substep(values, alpha: float, h: float, dx: float) -> np.ndarray:
    """One Crank-Nicolson step of u_t = alpha u_xx with Neumann closure."""
    f = np.asarray(values, dtype=float)
    r = alpha * h / dx ** 2
    lower, diag, upper = _cn_bands(f.shape[0], r)
    # diffuse the deviation from one node value so that constants stay exactly constant
    ref = f[:1]
    return ref + thomas_solve(lower, diag, upper, _cn_explicit(f - ref, r))


def cn_propagator(nx: int, alpha: float, h: float, dx: float) -> np.ndarray:
    """Dense matrix of one Crank-Nicolson step, assembled column-wise by Thomas elimination."""
    r = alpha * h / dx ** 2
    lower, diag, upper = _cn_bands(nx, r)
    return thomas_solve(lower, diag, upper, _cn_explicit(np.eye(nx), r))


def rate_scale(regimes, m1: float, m2: float, kpp: bool = False) -> float:
    if kpp:
        return max(r.a + r.b * m1 for r in regimes)
    m = max(m1, m2)
    return max(r.a + r.d + (r.b + r.c + r.e + r.f) * m for r in regimes)


def stability_cap(regimes, bounds: BoundConstants, kpp: bool = False) -> float:
    """Largest admissible time step: 0.1 over the reaction rate scale."""
    return 0.1 / rate_scale(regimes, bounds.m1, bounds.m2, kpp)


def _lv_matrices(regime: RegimeParams, kpp: bool):
    if kpp:
        return np.array([[regime.a]]), np.array([[-regime.b]])
    r = np.array([[regime.a], [-regime.d]])
    m = np.array([[-regime.b, -regime.c], [regime.e, -regime.f]])
    return r, m


class Stepper:
    """Strang-split stepping with cached Crank-Nicolson propagators per (regime, step size)."""

    def __init__(self, grid: Grid, kpp: bool = False):
        self.grid = grid
        self.kpp = kpp
        self._props = {}

    def _diffusivities(self, regime):
        return (regime.alpha1,) if self.kpp else (regime.alpha1, regime.alpha2)

    def propagator(self, regime: RegimeParams, h: float) -> np.ndarray:
        key = (self._diffusivities(regime), h)
        p = self._props.get(key)
        if p is None:
            p = np.stack([cn_propagator(self.grid.nx, al, h, self.grid.dx)
                          for al in self._diffusivities(regime)])
            self._props[key] = p
        return p

    def react(self, x, regime, h, mats=None):
        r, m = mats if mats is not None else _lv_matrices(regime, self.kpp)
        k1 = x * (r + m @ x)
        x1 = x + h * k1
        k2 = x1 * (r + m @ x1)
        out = x + (0.5 * h) * (k1 + k2)
        np.maximum(out, 0.0, out=out)
        return out

    def diffuse(self, x, regime, h, cached=True):
        if cached:
            p = self.propagator(regime, h)
            ref = x[:, :1]
            out = ref + np.matmul(p, (x - ref)[:, :, None])[:, :, 0]
        else:
            out = np.stack([diffusion_substep(x[k], al, h, self.grid.dx)
                            for k, al in enumerate(self._diffusivities(regime))])
        np.maximum(out, 0.0, out=out)
        return out

    def step(self, x, regime, h, cached=True, mats=None):
        mats = mats if mats is not None else _lv_matrices(regime, self.kpp)
        x = self.react(x, regime, 0.5 * h, mats)
        x = self.diffuse(x, regime, h, cached)
        return self.react(x, regime, 0.5 * h, mats)


def _single_regime_bounds(regime: RegimeParams, u_sup: float, v_sup: float) -> BoundConstants:
    env = SwitchingEnvironment(regime, regime, 1.0, 1.0)
    return bound_constants(env, u_sup, v_sup)


def step(state: SimState, dt: float, regime: RegimeParams, cap: float | None = None) -> SimState:
    """Advance ``state`` by one Strang-split step under ``regime``.

    ``cap`` defaults to the stability limit implied by the regime and the current sup norms.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    kpp = state.v is None
    if cap is None:
        vs = 0.0 if kpp else float(np.max(state.v))
        cap = stability_cap([regime], _single_regime_bounds(regime, float(np.max(state.u)), vs), kpp)
    if dt > cap:
        raise StabilityViolation(f"dt={dt} exceeds the stability cap {cap}")
    x = np.atleast_2d(state.u) if kpp else np.stack([state.u, state.v])
    x = Stepper(state.grid, kpp).step(np.array(x, dtype=float), regime, dt, cached=False)
    return SimState(state.t + dt, state.regime, x[0], None if kpp else x[1], state.grid)


@dataclass(eq=False)
class SnapshotSeries:
    """Fields at the sample times (multiples of sample_dt, every jump time, the horizon)."""

    grid: Grid
    times: np.ndarray
    regimes: np.ndarray
    u: np.ndarray
    v: np.ndarray | None
    dt: float = float("nan")
    path_digest: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> SimState:
        return SimState(float(self.times[k]), str(self.regimes[k]), self.u[k],
                        None if self.v is None else self.v[k], self.grid)

    def to_csv(self, header_comment: str | None = None) -> str:
        x = [repr(float(xi)) for xi in self.grid.x]
        lines = []
        if header_comment:
            lines.append("# " + header_comment)
        lines.append("t,x,u,v" if self.v is not None else "t,x,u")
        for k, t in enumerate(self.times):
            ts = repr(float(t))
            us = self.u[k].tolist()
            if self.v is None:
                lines.extend(f"{ts},{xi},{ui!r}" for xi, ui in zip(x, us))
            else:
                vs = self.v[k].tolist()
                lines.extend(f"{ts},{xi},{ui!r},{vi!r}" for xi, ui, vi in zip(x, us, vs))
        return "\n".join(lines) + "\n"

    def wide_csv(self, which: str, header_comment: str | None = None) -> str:
        """One row per time, one column per node: convenient for surface plots."""
        data = self.u if which == "u" else self.v
        lines = []
        if header_comment:
            lines.append("# " + header_comment)
        lines.append("t," + ",".join(f"x={float(xi)!r}" for xi in self.grid.x))
        for t, row in zip(self.times, data):
            lines.append(repr(float(t)) + "," + ",".join(repr(val) for val in row.tolist()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "SnapshotSeries":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        header, body = rows[0], rows[1:]
        data = np.array(body, dtype=float)
        ts = np.unique(data[:, 0])
        xs = np.unique(data[:, 1])
        nx = xs.size
        if data.shape[0] != ts.size * nx:
            raise ValueError("snapshot CSV is not a complete (t, x) product")
        u = data[:, 2].reshape(ts.size, nx)
        v = data[:, 3].reshape(ts.size, nx) if "v" in header else None
        grid = Grid(float(xs[-1] - xs[0]), nx)
        return cls(grid, ts, np.array([""] * ts.size), u, v)


def _check_initial(grid, *fields_):
    for f in fields_:
        if f is None:
            continue
        f = np.asarray(f, dtype=float)
        if f.shape != (grid.nx,):
            raise ValueError(f"initial field has shape {f.shape}, grid needs ({grid.nx},)")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValueError("initial data must be finite and nonnegative")


def _integrate(env, grid, x0, path, dt, sample_dt, kpp, margin):
    validate(env)
    u_sup = float(np.max(x0[0]))
    v_sup = 0.0 if kpp else float(np.max(x0[1]))
    bounds = bound_constants(env, u_sup, v_sup, margin)
    cap = stability_cap(env.regimes(), bounds, kpp)
    if dt is None:
        dt = cap
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > cap:
        raise StabilityViolation(f"dt={dt} exceeds the stability cap {cap:.6g}")

    times = sample_times(path.horizon, sample_dt, path.jump_times)
    snaps = np.empty((times.size,) + x0.shape)
    regimes = np.empty(times.size, dtype="<U1")
    stepper = Stepper(grid, kpp)
    mats = {s: _lv_matrices(env.regime(s), kpp) for s in ("+", "-")}
    x = np.array(x0, dtype=float)
    snaps[0] = x
    regimes[0] = path.state_at(0.0)
    for i in range(times.size - 1):
        t0, t1 = times[i], times[i + 1]
        state = path.state_at(t0)
        reg = env.regime(state)
        mat = mats[state]
        span = t1 - t0
        n_full = int(math.floor(span / dt * (1.0 + 1e-12)))
        rem = span - n_full * dt
        if n_full:
            # the propagator is resolved once per interval; the loop body stays allocation-light
            p = stepper.propagator(reg, dt)
            h2 = 0.5 * dt
            r, m = mat
            for _ in range(n_full):
                k1 = x * (r + m @ x)
                k2x = x + h2 * k1
                x = x + (0.5 * h2) * (k1 + k2x * (r + m @ k2x))
                np.maximum(x, 0.0, out=x)
                ref = x[:, :1]
                x = ref + np.matmul(p, (x - ref)[:, :, None])[:, :, 0]
                np.maximum(x, 0.0, out=x)
                k1 = x * (r + m @ x)
                k2x = x + h2 * k1
                x = x + (0.5 * h2) * (k1 + k2x * (r + m @ k2x))
                np.maximum(x, 0.0, out=x)
        if rem > 1e-12 * dt:
            x = stepper.step(x, reg, rem, cached=False, mats=mat)
        snaps[i + 1] = x
        regimes[i + 1] = path.state_at(t1)
    return times, regimes, snaps, dt, bounds


def simulate(env: SwitchingEnvironment, u0, v0, path: MarkovPath, dt: float | None = None,
             sample_dt: float = 0.05, grid: Grid | None = None, margin: float = 0.01) -> SnapshotSeries:
    """Integrate the switching predator-prey system over [0, path.horizon].

    ``dt=None`` uses the stability cap. Snapshots are taken at multiples of ``sample_dt``
    and at every jump time; the regime switches exactly at the jumps.
    """
    u0 = np.asarray(u0, dtype=float)
    grid = grid or Grid(1.0, u0.size)
    _check_initial(grid, u0, v0)
    times, regimes, snaps, dt, bounds = _integrate(env, grid, np.stack([u0, np.asarray(v0, float)]),
                                                   path, dt, sample_dt, False, margin)
    return SnapshotSeries(grid, times, regimes, snaps[:, 0], snaps[:, 1], dt, path.digest(),
                          {"m1": bounds.m1, "m2": bounds.m2})


def simulate_kpp(env: SwitchingEnvironment, u0, path: MarkovPath, dt: float | None = None,
                 sample_dt: float = 0.05, grid: Grid | None = None, margin: float = 0.01) -> SnapshotSeries:
    """Prey-only switching Fisher-KPP equation on the same stepping scheme."""
    u0 = np.asarray(u0, dtype=float)
    grid = grid or Grid(1.0, u0.size)
    _check_initial(grid, u0)
    times, regimes, snaps, dt, bounds = _integrate(env, grid, u0[None, :], path, dt, sample_dt, True, margin)
    return SnapshotSeries(grid, times, regimes, snaps[:, 0], None, dt, path.digest(),
                          {"m1": bounds.m1, "m2": bounds.m2})
