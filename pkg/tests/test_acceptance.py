"""Acceptance criteria, each run at its stated tolerance.

Checks that cannot be met are marked xfail(strict=True): they still run and assert the
stated bound, they are reported as FAIL in the summary, and an unexpected pass breaks
the build. The reasons are recorded in the decisions log kept next to the repository.
"""

import json
import time

import numpy as np
import pytest

from switchlv.analysis import comparison_check, extinction_rate, persistence_averages
from switchlv.cli import main, reproduce_config, run_simulation
from switchlv.markov import MarkovPath, make_rng, sample_path
from switchlv.model import EXAMPLES, RegimeParams, SwitchingEnvironment, bound_constants
from switchlv.pde import Grid, laplacian_neumann, simulate, simulate_kpp, stability_cap
from switchlv.switching_ode import occupation_cdf, simulate_switching_logistic
from switchlv.threshold import (EXTINCTION, PERSISTENCE, classify, conditional_quantiles, lambda_mc,
                                lambda_quadrature, normalization_residual, stationary_density)

E52, E53 = EXAMPLES["5.2"], EXAMPLES["5.3"]

UNREACHABLE_52 = ("-3 is the infimum of -d + e y over the support [1, 3]; the stationary law is spread "
                  "over the whole interval, so lambda = -1.417 (quadrature and Monte Carlo agree)")


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


# --- 1: threshold, 5.2 --------------------------------------------------------------------

@pytest.fixture(scope="module")
def threshold_52():
    def run():
        quad = lambda_quadrature(E52)
        mc = lambda_mc(E52, horizon=1e4, n_paths=16, seed=0)
        rep = classify(E52, mc_horizon=None)
        return quad, mc, rep
    return timed(run)


@pytest.mark.criterion(1)
@pytest.mark.xfail(strict=True, reason=UNREACHABLE_52)
def test_lambda_quadrature_is_minus_3(threshold_52, record_property):
    (quad, _, _), _ = threshold_52
    record_property("measured", f"lambda_quadrature={quad.value:.10g}, need -3 +/- 0.05")
    assert abs(quad.value + 3.0) <= 0.05


@pytest.mark.criterion(1)
@pytest.mark.xfail(strict=True, reason=UNREACHABLE_52)
def test_lambda_mc_is_minus_3(threshold_52, record_property):
    (_, mc, _), _ = threshold_52
    record_property("measured", f"lambda_mc={mc.value:.6g} +/- {mc.error:.2g}, need -3 within 3 s.e.")
    assert abs(mc.value + 3.0) <= 3 * mc.error


@pytest.mark.criterion(1)
def test_classification_52(threshold_52, record_property):
    (_, _, rep), _ = threshold_52
    record_property("measured", rep.classification)
    assert rep.classification == EXTINCTION


@pytest.mark.criterion(1)
def test_runtime_52(threshold_52, record_property):
    _, seconds = threshold_52
    record_property("measured", f"{seconds:.1f} s < 30 s")
    assert seconds < 30


# --- 2: threshold, 5.3 --------------------------------------------------------------------

@pytest.fixture(scope="module")
def threshold_53():
    return timed(classify, E53, mc_horizon=1e4, mc_paths=16, seed=0)


@pytest.mark.criterion(2)
def test_quadrature_mc_agree_53(threshold_53, record_property):
    rep, _ = threshold_53
    diff = abs(rep.lambda_quadrature - rep.lambda_mc)
    limit = 3 * (rep.lambda_quadrature_err + rep.lambda_mc_stderr)
    record_property("measured", f"quad={rep.lambda_quadrature:.10g}, mc={rep.lambda_mc:.6g}, "
                                f"|diff|={diff:.2g} <= {limit:.2g}")
    assert diff <= limit
    assert rep.lambda_quadrature > 0 and rep.lambda_mc > 0


@pytest.mark.criterion(2)
def test_classification_53(threshold_53, record_property):
    rep, _ = threshold_53
    record_property("measured", rep.classification)
    assert rep.classification == PERSISTENCE


@pytest.mark.criterion(2)
def test_runtime_53(threshold_53, record_property):
    _, seconds = threshold_53
    record_property("measured", f"{seconds:.1f} s < 30 s")
    assert seconds < 30


# --- 3: extinction dynamics, 5.2 ------------------------------------------------------------

@pytest.fixture(scope="module")
def run_52():
    return timed(run_simulation, reproduce_config("5.2"))


@pytest.mark.criterion(3)
@pytest.mark.xfail(strict=True, reason="the decay rate follows lambda = -1.417 for this environment")
def test_extinction_slope(run_52, record_property):
    bundle, _ = run_52
    fit = extinction_rate(bundle.series)
    record_property("measured", f"slope={fit.slope:.4g} on [{fit.t_lo:g}, {fit.t_hi:g}], need <= -2.5")
    assert fit.slope <= -2.5


@pytest.mark.criterion(3)
def test_final_predator_sup(run_52, record_property):
    bundle, _ = run_52
    s = bundle.series
    assert s.times[-1] == 50.0 and s.grid.nx == 101
    sup_v = s.v[-1].max()
    record_property("measured", f"sup v(50)={sup_v:.3g} < 1e-3")
    assert sup_v < 1e-3


@pytest.mark.criterion(3)
def test_prey_flatness_after_5(run_52, record_property):
    bundle, _ = run_52
    s = bundle.series
    late = s.u[s.times >= 5]
    flat = (late.max(axis=1) - late.min(axis=1)).max()
    record_property("measured", f"max flatness={flat:.3g} < 1e-2")
    assert flat < 1e-2


@pytest.mark.criterion(3)
def test_prey_range_after_5(run_52, record_property):
    bundle, _ = run_52
    s = bundle.series
    late = s.u[s.times >= 5]
    record_property("measured", f"u in [{late.min():.4f}, {late.max():.4f}] within [0.99, 3.01]")
    assert late.min() >= 1 - 1e-2 and late.max() <= 3 + 1e-2


@pytest.mark.criterion(3)
def test_runtime_pde_52(run_52, record_property):
    _, seconds = run_52
    record_property("measured", f"{seconds:.1f} s < 120 s")
    assert seconds < 120


# --- 4: persistence dynamics, 5.3 ---------------------------------------------------------

@pytest.fixture(scope="module")
def run_53():
    return timed(run_simulation, reproduce_config("5.3"))


@pytest.mark.criterion(4)
def test_persistence_averages_exceed_bounds(run_53, record_property):
    bundle, _ = run_53
    assert bundle.series.times[-1] == 200.0 and bundle.series.grid.nx == 101
    avg = persistence_averages(bundle.series)
    d1, d2 = bundle.report.delta1, bundle.report.delta2
    record_property("measured", f"avg_u={avg.avg_u:.4g} >= delta1={d1:.4g}, avg_v={avg.avg_v:.4g} >= delta2={d2:.4g}")
    assert avg.avg_u >= d1 and avg.avg_v >= d2


@pytest.mark.criterion(4)
def test_omega_distance_hits(run_53, record_property):
    bundle, _ = run_53
    cloud, dist = bundle.cloud, bundle.distances
    assert cloud.depth == 3 and len(cloud) == 500
    hits = dist.hits(0.05)
    record_property("measured", f"running min={dist.running_min[-1]:.3g}, {hits} times below 0.05 (need >= 10)")
    assert dist.running_min[-1] < 0.05 and hits >= 10


@pytest.mark.criterion(4)
def test_runtime_pde_53(run_53, record_property):
    _, seconds = run_53
    record_property("measured", f"{seconds:.1f} s < 300 s")
    assert seconds < 300


# --- 5: comparison principle ----------------------------------------------------------------

def _random_cases(n=20, seed=2024):
    rng = make_rng(seed)
    g = Grid(1.0, 51)
    for i in range(n):
        def reg():
            return RegimeParams(*rng.uniform(0.5, 3.0, 6), *rng.uniform(0.1, 2.0, 2))
        env = SwitchingEnvironment(reg(), reg(), *rng.uniform(0.5, 5.0, 2))
        k = rng.integers(1, 4)
        u0 = rng.uniform(0.2, 4.0) * (1 + 0.5 * np.cos(np.pi * k * g.x))
        v0 = rng.uniform(0.1, 3.0) * (1 + 0.5 * np.sin(np.pi * g.x) ** 2)
        yield env, sample_path(env, "+" if i % 2 == 0 else "-", 20.0, 1000 + i), g, u0, v0


@pytest.mark.criterion(5)
def test_comparison_principle_suite(record_property):
    worst, n_ok = -np.inf, 0
    failures = []
    for env, path, g, u0, v0 in _random_cases():
        bounds = bound_constants(env, u0.max(), v0.max())
        # a quarter of the stability cap keeps the O(dt^2) reaction error below the slack
        dt = 0.25 * stability_cap(env.regimes(), bounds)
        s = simulate(env, u0, v0, path, dt=dt, sample_dt=0.05, grid=g)
        res = comparison_check(s, simulate_switching_logistic(env, path, u0.max(), 0.05), slack=1e-6)
        worst = max(worst, res.max_violation)
        ok = (res.passed and s.u.min() > 0 and s.v.min() > 0
              and s.u.max() <= bounds.m1 and s.v.max() <= bounds.m2)
        n_ok += ok
        if not ok:
            failures.append(path.digest()[:8])
    record_property("measured", f"{n_ok}/20 cases, worst excess {worst:.2g} <= 1e-6")
    assert not failures, failures


# --- 6: stationary density ------------------------------------------------------------------

@pytest.mark.criterion(6)
@pytest.mark.parametrize("example", ["5.2", "5.3"])
def test_normalization_residual(example, record_property):
    res = normalization_residual(stationary_density(EXAMPLES[example]))
    record_property("measured", f"{example}: residual={res:.2g} < 1e-8")
    assert res < 1e-8


@pytest.mark.criterion(6)
@pytest.mark.parametrize("example", ["5.2", "5.3"])
def test_kolmogorov_distance(example, record_property):
    env = EXAMPLES[example]
    sd = stationary_density(env)
    probs = np.arange(1, 21) / 21
    burn = 1e3
    path = sample_path(env, "+", 1e6 + burn, 17)
    y0 = 0.5 * (sd.lo + sd.hi)
    dist = {}
    for regime, k in (("+", 0), ("-", 1)):
        levels = conditional_quantiles(sd, regime, probs)
        emp = occupation_cdf(env, path, y0, levels, t_start=burn)[k]
        dist[regime] = float(np.max(np.abs(emp - probs)))
    record_property("measured", f"{example}: D+={dist['+']:.2g}, D-={dist['-']:.2g} < 0.02")
    assert max(dist.values()) < 0.02


# --- 7: convergence order -------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_laplacian_order(record_property):
    errs = []
    for nx in (101, 201, 401):
        g = Grid(1.0, nx)
        f = np.cos(np.pi * g.x)
        errs.append(np.max(np.abs(laplacian_neumann(f, g.dx) + np.pi ** 2 * f)[1:-1]))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    record_property("measured", "ratios " + ", ".join(f"{r:.3f}" for r in ratios))
    assert all(3.5 <= r <= 4.5 for r in ratios)


def _kpp(nx, dt):
    r = RegimeParams(1, 1, 1, 1, 1, 1, 0.1, 0.1)
    env = SwitchingEnvironment(r, r, 1, 1)
    g = Grid(1.0, nx)
    return simulate_kpp(env, 1 + 0.5 * np.cos(np.pi * g.x), MarkovPath("+", [], 1.0), dt=dt,
                        sample_dt=1.0, grid=g).u[-1]


@pytest.mark.criterion(7)
def test_strang_kpp_order(record_property):
    sols = [_kpp(51, dt) for dt in (0.032, 0.016, 0.008, 0.004)]
    e = [np.max(np.abs(sols[i] - sols[i + 1])) for i in range(3)]
    t_ratios = [e[0] / e[1], e[1] / e[2]]
    sols = [_kpp(nx, 5e-4) for nx in (11, 21, 41, 81)]
    coarse = [s[:: 2 ** k] for k, s in enumerate(sols)]
    e = [np.max(np.abs(coarse[i] - coarse[i + 1])) for i in range(3)]
    x_ratios = [e[0] / e[1], e[1] / e[2]]
    record_property("measured", "dt ratios " + ", ".join(f"{r:.3f}" for r in t_ratios)
                    + "; dx ratios " + ", ".join(f"{r:.3f}" for r in x_ratios))
    assert all(3.5 <= r <= 4.5 for r in t_ratios + x_ratios)


# --- 8: determinism -------------------------------------------------------------------------

def _config(tmp_path, **extra):
    cfg = {"environment": "5.3", "grid": {"L": 1.0, "nx": 51}, "horizon": 10.0, "sample_dt": 0.05,
           "seed": 12345, "threshold": {"mc_horizon": 1e3, "mc_paths": 8},
           "initial": {"u": {"terms": [{"type": "cos", "amp": 5.0}, {"type": "const", "value": 2.0}], "clip": True},
                       "v": [{"type": "sin2", "amp": 5.0}]},
           "omega": {"depth": 2, "n_points": 50}}
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.mark.criterion(8)
def test_simulate_byte_identical(tmp_path, record_property):
    cfg = _config(tmp_path)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "4"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    record_property("measured", f"{sum(same)}/{len(names)} files identical")
    assert all(same)


@pytest.mark.criterion(8)
def test_sweep_worker_independent(tmp_path, record_property):
    axes = [{"field": "plus.d", "values": [0.5, 2.0, 1.0]}, {"field": "q_minus", "values": [1.0, 5.0]},
            {"field": "minus.e", "values": [2.0, 0.5]}]
    cfg = _config(tmp_path, sweep={"axes": axes})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "w4"), "--workers", "4"]) == 0
    a = (tmp_path / "w1" / "atlas.csv").read_bytes()
    b = (tmp_path / "w4" / "atlas.csv").read_bytes()
    record_property("measured", f"{len(a.splitlines()) - 2} rows, identical={a == b}")
    assert a == b
