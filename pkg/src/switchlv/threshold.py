"""Stationary law of the switching logistic process and the predator invasion rate lambda.

lambda is the stationary average of -d(xi) + e(xi) y, where (y, xi) is the switching
logistic process. It is computed two ways: by quadrature against the explicit
stationary density, and by an ergodic time average along exactly integrated paths.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .markov import derive_seeds, sample_path, stationary_distribution
from .model import SwitchingEnvironment, validate
from .quadrature import endpoint_regularized, gauss_jacobi
from .switching_ode import logistic_integral, logistic_segments

EXTINCTION = "Extinction"
PERSISTENCE = "Persistence"
CRITICAL = "Critical"


class DegenerateSupport(ValueError):
    pass


class OutsideSupport(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StationaryDensity:
    """Joint stationary density of (y, xi): mu_plus on {+} and mu_minus on {-}.

    The two pieces share the constant ``theta`` chosen so that their total mass is one;
    ``mass_plus`` and ``mass_minus`` are then the regime marginals.
    Densities are evaluated as exp(log-density - log_shift) times ``scaled_theta`` to keep
    large exponents finite.
    """

    env: SwitchingEnvironment
    lo: float
    hi: float
    p_plus: float
    p_minus: float
    plus_at_lo: bool
    log_shift: float
    scaled_theta: float
    mass_plus: float
    mass_minus: float
    error: float
    trace: list = field(default_factory=list, repr=False)

    @property
    def theta(self) -> float:
        return self.scaled_theta * math.exp(-self.log_shift) if self.log_shift < 700 else 0.0

    def exponents(self, regime: str):
        """Algebraic exponents of the density at (lo, hi)."""
        e_plus, e_minus = _factor_exponents(self.p_plus, self.p_minus, regime)
        return (e_plus, e_minus) if self.plus_at_lo else (e_minus, e_plus)

    def unnormalized(self, d_lo, d_hi, regime: str):
        return _density_from_distances(self, d_lo, d_hi, regime)

    def pdf(self, y, regime: str):
        y = np.asarray(y, dtype=float)
        return self.scaled_theta * _density_from_distances(self, y - self.lo, self.hi - y, regime)


def _factor_exponents(p_plus, p_minus, regime):
    if regime == "+":
        return p_plus - 1.0, p_minus
    if regime == "-":
        return p_plus, p_minus - 1.0
    raise ValueError(f"unknown regime {regime!r}")


def _log_density(sd_like, d_lo, d_hi, regime):
    env = sd_like.env
    e_plus, e_minus = _factor_exponents(sd_like.p_plus, sd_like.p_minus, regime)
    d_plus, d_minus = (d_lo, d_hi) if sd_like.plus_at_lo else (d_hi, d_lo)
    y = sd_like.lo + d_lo
    with np.errstate(divide="ignore"):
        return (e_plus * np.log(env.plus.b * d_plus) + e_minus * np.log(env.minus.b * d_minus)
                - (sd_like.p_plus + sd_like.p_minus + 1.0) * np.log(y))


def _density_from_distances(sd_like, d_lo, d_hi, regime):
    return np.exp(_log_density(sd_like, np.asarray(d_lo, dtype=float),
                               np.asarray(d_hi, dtype=float), regime) - sd_like.log_shift)


@dataclass(frozen=True)
class _Shape:
    env: SwitchingEnvironment
    lo: float
    hi: float
    p_plus: float
    p_minus: float
    plus_at_lo: bool
    log_shift: float = 0.0


def _shape(env: SwitchingEnvironment) -> _Shape:
    validate(env)
    k_plus, k_minus = env.plus.carrying_capacity, env.minus.carrying_capacity
    if k_plus == k_minus:
        raise DegenerateSupport("both regimes share the carrying capacity a/b; the support is a point")
    lo, hi = sorted((k_plus, k_minus))
    shape = _Shape(env, lo, hi, env.q_plus / env.plus.a, env.q_minus / env.minus.a, k_plus < k_minus)
    # reference level for the log-densities: their max over an interior grid
    d = (hi - lo) * np.linspace(0.001, 0.999, 999)
    ref = max(float(np.max(_log_density(shape, d, (hi - lo) - d, r))) for r in ("+", "-"))
    return _Shape(env, lo, hi, shape.p_plus, shape.p_minus, shape.plus_at_lo, ref)


def _exps(shape, regime):
    e_plus, e_minus = _factor_exponents(shape.p_plus, shape.p_minus, regime)
    return (e_plus, e_minus) if shape.plus_at_lo else (e_minus, e_plus)


def _moments(shape: _Shape, quad_tol: float):
    """Unnormalized masses and first moments of both density pieces."""
    out = {}
    err = 0.0
    trace = []
    for regime in ("+", "-"):
        g_lo, g_hi = _exps(shape, regime)

        def mass(dl, dh, regime=regime):
            return _density_from_distances(shape, dl, dh, regime)

        def moment(dl, dh, regime=regime):
            return (shape.lo + dl) * _density_from_distances(shape, dl, dh, regime)

        rm = endpoint_regularized(mass, shape.lo, shape.hi, g_lo, g_hi, tol=quad_tol, rel_tol=quad_tol)
        ry = endpoint_regularized(moment, shape.lo, shape.hi, g_lo, g_hi, tol=quad_tol, rel_tol=quad_tol)
        out[regime] = (rm.value, ry.value, rm.error, ry.error)
        err += rm.error + ry.error
        trace.append({"regime": regime, "integral": "mass", "intervals": rm.n_intervals, "error": rm.error})
        trace.append({"regime": regime, "integral": "moment", "intervals": ry.n_intervals, "error": ry.error})
    return out, trace


def stationary_density(env: SwitchingEnvironment, quad_tol: float = 1e-12) -> StationaryDensity:
    shape = _shape(env)
    mom, trace = _moments(shape, quad_tol)
    total = mom["+"][0] + mom["-"][0]
    err = (mom["+"][2] + mom["-"][2]) / total
    return StationaryDensity(env, shape.lo, shape.hi, shape.p_plus, shape.p_minus, shape.plus_at_lo,
                             shape.log_shift, 1.0 / total, mom["+"][0] / total, mom["-"][0] / total,
                             err, trace)


def density_at(sd: StationaryDensity, y: float, regime: str) -> float:
    if not (sd.lo < y < sd.hi):
        raise OutsideSupport(f"y={y} is not inside ({sd.lo}, {sd.hi})")
    return float(sd.pdf(y, regime))


def compute_theta(env: SwitchingEnvironment, quad_tol: float = 1e-12, method: str = "substitution") -> float:
    """Normalizing constant of the stationary density.

    ``method="gauss_jacobi"`` uses Gauss-Jacobi rules with the endpoint powers as weight
    function, an independent route from the default substitution + adaptive Gauss-Kronrod.
    """
    if method == "substitution":
        return stationary_density(env, quad_tol).theta
    if method == "gauss_jacobi":
        masses = _gauss_jacobi_moments(_shape(env))
        return math.exp(-_shape(env).log_shift) / (masses["+"][0] + masses["-"][0])
    raise ValueError(f"unknown method {method!r}")


def _gauss_jacobi_moments(shape: _Shape, n: int = 120):
    env = shape.env
    out = {}
    for regime in ("+", "-"):
        g_lo, g_hi = _exps(shape, regime)
        e_plus, e_minus = _factor_exponents(shape.p_plus, shape.p_minus, regime)
        b_lo, b_hi = (env.plus.b, env.minus.b) if shape.plus_at_lo else (env.minus.b, env.plus.b)
        log_c = g_lo * math.log(b_lo) + g_hi * math.log(b_hi) - shape.log_shift
        power = shape.p_plus + shape.p_minus + 1.0

        def smooth(y):
            return np.exp(log_c - power * np.log(y))

        m = gauss_jacobi(smooth, shape.lo, shape.hi, g_lo, g_hi, n)
        ym = gauss_jacobi(lambda y: y * smooth(y), shape.lo, shape.hi, g_lo, g_hi, n)
        out[regime] = (m, ym)
    return out


def normalization_residual(sd: StationaryDensity, n: int = 120) -> float:
    """|total mass - 1| of the normalized density, re-integrated by Gauss-Jacobi rules."""
    shape = _Shape(sd.env, sd.lo, sd.hi, sd.p_plus, sd.p_minus, sd.plus_at_lo, sd.log_shift)
    masses = _gauss_jacobi_moments(shape, n)
    return abs(sd.scaled_theta * (masses["+"][0] + masses["-"][0]) - 1.0)


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float


def _point_mass_lambda(env: SwitchingEnvironment) -> float:
    y_star = env.plus.carrying_capacity
    pi_plus, pi_minus = stationary_distribution(env)
    return pi_plus * (-env.plus.d + env.plus.e * y_star) + pi_minus * (-env.minus.d + env.minus.e * y_star)


def lambda_quadrature(env: SwitchingEnvironment, quad_tol: float = 1e-12) -> Estimate:
    """lambda by quadrature; falls back to the point-mass formula when the support degenerates."""
    try:
        shape = _shape(env)
    except DegenerateSupport:
        return Estimate(_point_mass_lambda(env), 0.0)
    mom, _ = _moments(shape, quad_tol)
    total = mom["+"][0] + mom["-"][0]
    num = sum(-env.regime(r).d * mom[r][0] + env.regime(r).e * mom[r][1] for r in ("+", "-"))
    lam = num / total
    err_num = sum(env.regime(r).d * mom[r][2] + env.regime(r).e * mom[r][3] for r in ("+", "-"))
    err = err_num / total + abs(lam) * (mom["+"][2] + mom["-"][2]) / total
    return Estimate(float(lam), float(err))


def lambda_gauss_jacobi(env: SwitchingEnvironment, n: int = 120) -> float:
    """Oracle value of lambda from Gauss-Jacobi rules (no adaptivity, no substitution)."""
    try:
        shape = _shape(env)
    except DegenerateSupport:
        return _point_mass_lambda(env)
    mom = _gauss_jacobi_moments(shape, n)
    total = mom["+"][0] + mom["-"][0]
    return float(sum(-env.regime(r).d * mom[r][0] + env.regime(r).e * mom[r][1] for r in ("+", "-")) / total)


def _default_y0(env):
    return 0.5 * (env.plus.carrying_capacity + env.minus.carrying_capacity)


def path_average(env: SwitchingEnvironment, path, y0: float, burn_in: float = 0.1) -> float:
    """Time average of -d(xi) + e(xi) y along one exactly integrated path after burn-in."""
    t0 = burn_in * path.horizon
    seg = logistic_segments(env, path, y0, t0)
    d = np.where(seg.plus, env.plus.d, env.minus.d)
    e = np.where(seg.plus, env.plus.e, env.minus.e)
    integral = -d * seg.lengths + e * logistic_integral(seg.a, seg.b, seg.y_start, seg.lengths)
    return float(np.sum(integral) / (path.horizon - t0))


def _mc_one(args):
    env, horizon, seed, state, y0, burn_in = args
    path = sample_path(env, state, horizon, seed)
    return path_average(env, path, y0, burn_in)


def lambda_mc(env: SwitchingEnvironment, horizon: float = 1e4, n_paths: int = 16, seed: int = 0,
              burn_in: float = 0.1, y0: float | None = None, workers: int = 1) -> Estimate:
    """Ergodic Monte Carlo estimate of lambda; ``error`` is the standard error over paths.

    Path k uses the k-th derived seed and starts in '+' for even k, '-' for odd k.
    """
    validate(env)
    if horizon <= 0 or n_paths < 1:
        raise ValueError("need horizon > 0 and n_paths >= 1")
    if y0 is None:
        y0 = _default_y0(env)
    seeds = derive_seeds(seed, n_paths)
    jobs = [(env, horizon, s, "+" if k % 2 == 0 else "-", y0, burn_in) for k, s in enumerate(seeds)]
    if workers > 1 and n_paths > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_mc_one, jobs))
    else:
        values = [_mc_one(j) for j in jobs]
    values = np.asarray(values)
    mean = float(np.sum(values) / n_paths)
    stderr = float(np.std(values, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("nan")
    return Estimate(mean, stderr)


def persistence_bounds(env: SwitchingEnvironment, lam: float):
    """Lower bounds (delta1, delta2) on the long-run space-time averages of prey and predator."""
    delta2 = lam * env.b_min / (env.f_max * env.b_min + env.c_max * env.e_max)
    delta1 = env.c_min * env.d_min / (env.a_max * env.e_max) * delta2
    return delta1, delta2


def classify_value(lam: float, crit_tol: float = 1e-3) -> str:
    if lam < -crit_tol:
        return EXTINCTION
    if lam > crit_tol:
        return PERSISTENCE
    return CRITICAL


@dataclass
class ThresholdReport:
    lambda_quadrature: float
    lambda_quadrature_err: float
    lambda_mc: float | None
    lambda_mc_stderr: float | None
    classification: str
    delta1: float | None
    delta2: float | None
    support_lo: float
    support_hi: float
    theta: float | None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lambda_quadrature": self.lambda_quadrature,
            "lambda_quadrature_err": self.lambda_quadrature_err,
            "lambda_mc": self.lambda_mc,
            "lambda_mc_stderr": self.lambda_mc_stderr,
            "classification": self.classification,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "support_lo": self.support_lo,
            "support_hi": self.support_hi,
            "theta": self.theta,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(_finite_or_none(self.to_dict()), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdReport":
        return cls(**{k: data.get(k) for k in cls.__dataclass_fields__ if k != "diagnostics"},
                   diagnostics=data.get("diagnostics") or {})

    def agreement(self) -> float | None:
        """|quadrature - MC| in units of the combined error, or None without an MC estimate."""
        if self.lambda_mc is None or self.lambda_mc_stderr is None:
            return None
        scale = self.lambda_quadrature_err + self.lambda_mc_stderr
        diff = abs(self.lambda_quadrature - self.lambda_mc)
        return diff / scale if scale > 0 else (0.0 if diff == 0 else math.inf)


def _finite_or_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    return obj


def classify(env: SwitchingEnvironment, crit_tol: float = 1e-3, quad_tol: float = 1e-12,
             mc_horizon: float | None = 1e4, mc_paths: int = 16, seed: int = 0,
             workers: int = 1) -> ThresholdReport:
    """Threshold report; classification follows the quadrature value. ``mc_horizon=None`` skips MC."""
    validate(env)
    quad = lambda_quadrature(env, quad_tol)
    lo, hi = sorted((env.plus.carrying_capacity, env.minus.carrying_capacity))
    diagnostics = {}
    theta = None
    if lo < hi:
        sd = stationary_density(env, quad_tol)
        theta = sd.theta
        diagnostics["mass_plus"] = sd.mass_plus
        diagnostics["mass_minus"] = sd.mass_minus
        diagnostics["normalization_residual"] = normalization_residual(sd)
        diagnostics["normalization_error_estimate"] = sd.error
        diagnostics["quadrature_trace"] = sd.trace
        diagnostics["lambda_gauss_jacobi"] = lambda_gauss_jacobi(env)
    else:
        diagnostics["point_mass"] = lo
    mc_value = mc_err = None
    if mc_horizon:
        mc = lambda_mc(env, mc_horizon, mc_paths, seed, workers=workers)
        mc_value, mc_err = mc.value, mc.error
        diagnostics["mc_horizon"] = mc_horizon
        diagnostics["mc_paths"] = mc_paths
        diagnostics["mc_seed"] = seed
    label = classify_value(quad.value, crit_tol)
    delta1 = delta2 = None
    if label == PERSISTENCE:
        delta1, delta2 = persistence_bounds(env, quad.value)
    report = ThresholdReport(quad.value, quad.error, mc_value, mc_err, label, delta1, delta2,
                             lo, hi, theta, diagnostics)
    agree = report.agreement()
    if agree is not None:
        diagnostics["agreement_sigmas"] = agree
    return report


def conditional_cdf(sd: StationaryDensity, level: float, regime: str, quad_tol: float = 1e-12) -> float:
    """P(y <= level | xi = regime) under the stationary law."""
    if level <= sd.lo:
        return 0.0
    if level >= sd.hi:
        return 1.0
    g_lo, _ = sd.exponents(regime)
    span = sd.hi - level

    def f(dl, dh):
        return sd.unnormalized(dl, dh + span, regime)

    part = endpoint_regularized(f, sd.lo, level, g_lo, 0.0, tol=quad_tol, rel_tol=quad_tol).value
    mass = sd.mass_plus if regime == "+" else sd.mass_minus
    return float(min(1.0, part * sd.scaled_theta / mass))


def conditional_quantiles(sd: StationaryDensity, regime: str, probs) -> np.ndarray:
    out = []
    for p in probs:
        out.append(brentq(lambda c: conditional_cdf(sd, c, regime, 1e-11) - p, sd.lo, sd.hi,
                          xtol=1e-12, rtol=1e-12))
    return np.asarray(out)
