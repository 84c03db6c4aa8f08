"""Estimators that compare simulated trajectories with the asymptotic theory."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .pde import Grid, SnapshotSeries
from .switching_ode import LogisticTrajectory, OmegaSetSample


class InsufficientData(ValueError):
    pass


class AllZero(ValueError):
    """The predator field is identically zero; the log-sup rate is -inf."""


class PathMismatch(ValueError):
    pass


class EmptyCloud(ValueError):
    pass


# smallest sup value kept in the log-linear fit; below it the clamp/underflow regime starts
_LOG_FLOOR = 1e-290


@dataclass(frozen=True)
class ExtinctionFit:
    t_lo: float
    t_hi: float
    slope: float
    intercept: float
    r_squared: float
    n_samples: int

    @property
    def window(self):
        return (self.t_lo, self.t_hi)


def extinction_rate(series: SnapshotSeries, tail_fraction: float = 0.5, min_samples: int = 10) -> ExtinctionFit:
    """Least-squares slope of ln sup_x v(t, .) over the final ``tail_fraction`` of usable samples."""
    if series.v is None or len(series) == 0:
        raise InsufficientData("series has no predator field")
    sup = series.v.max(axis=1)
    if np.all(sup == 0):
        raise AllZero("predator density is identically zero")
    usable = np.flatnonzero(sup > _LOG_FLOOR)
    # stop before the first unusable sample: later ones would only re-enter through round-off
    if usable.size and usable[-1] - usable[0] + 1 != usable.size:
        gap = np.flatnonzero(np.diff(usable) > 1)[0]
        usable = usable[: gap + 1]
    if usable.size < min_samples:
        raise InsufficientData(f"only {usable.size} usable samples")
    t_all = series.times[usable]
    t_cut = t_all[0] + (1.0 - tail_fraction) * (t_all[-1] - t_all[0])
    sel = usable[t_all >= t_cut]
    if sel.size < min_samples:
        raise InsufficientData(f"only {sel.size} samples in the tail window")
    t = series.times[sel]
    y = np.log(sup[sel])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ExtinctionFit(float(t[0]), float(t[-1]), float(slope), float(intercept), r2, int(sel.size))


@dataclass(frozen=True)
class PersistenceAverages:
    horizon: float
    avg_u: float
    avg_v: float | None


def _time_average(times, values):
    span = times[-1] - times[0]
    return float(trapezoid(values, times) / span)


def persistence_averages(series: SnapshotSeries) -> PersistenceAverages:
    """Space-time averages (1/T) int_0^T (1/|E|) int_E z dx dt by the trapezoid rule in t and x."""
    if len(series) < 2 or series.times[-1] <= series.times[0]:
        raise InsufficientData("need at least two snapshots spanning a positive time")
    mean_u = series.grid.mean(series.u)
    avg_v = None
    if series.v is not None:
        avg_v = _time_average(series.times, series.grid.mean(series.v))
    return PersistenceAverages(float(series.times[-1] - series.times[0]),
                               _time_average(series.times, mean_u), avg_v)


def spatial_flatness(values) -> float | np.ndarray:
    """max - min over nodes (along the last axis)."""
    f = np.asarray(values, dtype=float)
    out = f.max(axis=-1) - f.min(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def flatness_series(series: SnapshotSeries):
    flat_v = spatial_flatness(series.v) if series.v is not None else None
    return series.times, spatial_flatness(series.u), flat_v


@dataclass(frozen=True)
class ComparisonResult:
    max_violation: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.slack


def comparison_check(series: SnapshotSeries, logistic: LogisticTrajectory, slack: float = 1e-6) -> ComparisonResult:
    """Largest excess of u(t, x) over the homogeneous logistic bound y(t) on shared sample times."""
    if series.path_digest and series.path_digest != logistic.path.digest():
        raise PathMismatch("series and logistic trajectory were driven by different paths")
    if series.times.shape != logistic.times.shape or not np.allclose(series.times, logistic.times,
                                                                     rtol=0, atol=1e-12):
        raise PathMismatch("series and logistic trajectory are sampled at different times")
    excess = series.u - logistic.values[:, None]
    return ComparisonResult(float(np.max(excess)), slack)


@dataclass(frozen=True)
class OmegaDistances:
    times: np.ndarray
    distances: np.ndarray
    running_min: np.ndarray

    def hits(self, threshold: float) -> int:
        """Number of distinct snapshot times with distance below ``threshold``."""
        return int(np.unique(self.times[self.distances < threshold]).size)


def omega_distance(series: SnapshotSeries, cloud: OmegaSetSample, tail_fraction: float = 0.5) -> OmegaDistances:
    """Distance of each tail snapshot to the constant states of the cloud.

    distance = flat(u) + flat(v) + min_k max(|mean u - u_k|, |mean v - v_k|).
    """
    if cloud is None or len(cloud) == 0:
        raise EmptyCloud("omega-set sample has no points")
    if series.v is None:
        raise InsufficientData("series has no predator field")
    t_cut = series.times[0] + (1.0 - tail_fraction) * (series.times[-1] - series.times[0])
    sel = series.times >= t_cut
    return cloud_distance(series.grid, series.times[sel], series.u[sel], series.v[sel],
                          np.asarray(cloud.points))


def cloud_distance(grid: Grid, times, u, v, points) -> OmegaDistances:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.size == 0:
        raise EmptyCloud("omega-set sample has no points")
    mu = grid.mean(u)
    mv = grid.mean(v)
    cheb = np.maximum(np.abs(mu[:, None] - points[None, :, 0]), np.abs(mv[:, None] - points[None, :, 1]))
    dist = spatial_flatness(u) + spatial_flatness(v) + cheb.min(axis=1)
    dist = np.atleast_1d(dist)
    return OmegaDistances(np.asarray(times), dist, np.minimum.accumulate(dist))
