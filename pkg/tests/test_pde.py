import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_banded

from switchlv.markov import MarkovPath, sample_path
from switchlv.model import EXAMPLES, RegimeParams, SwitchingEnvironment, bound_constants
from switchlv.pde import (Grid, SimState, SnapshotSeries, StabilityViolation, cn_propagator,
                          diffusion_substep, laplacian_neumann, simulate, simulate_kpp, stability_cap,
                          step, thomas_solve)
from switchlv.switching_ode import sample_times

E52, E53 = EXAMPLES["5.2"], EXAMPLES["5.3"]


def test_laplacian_constant_is_zero():
    assert np.all(laplacian_neumann(np.full(11, 3.7), 0.1) == 0.0)


def test_laplacian_quadratic_interior():
    g = Grid(1.0, 101)
    lap = laplacian_neumann(g.x ** 2, g.dx)
    np.testing.assert_allclose(lap[1:-1], 2.0, rtol=1e-9)


def test_laplacian_boundary_reflection():
    f = np.array([1.0, 2.0, 4.0, 8.0])
    lap = laplacian_neumann(f, 0.5)
    assert lap[0] == 2 * (2.0 - 1.0) / 0.25
    assert lap[-1] == 2 * (4.0 - 8.0) / 0.25


def test_laplacian_second_order():
    errs = []
    for nx in (101, 201, 401):
        g = Grid(1.0, nx)
        f = np.cos(np.pi * g.x)
        errs.append(np.max(np.abs(laplacian_neumann(f, g.dx) + np.pi ** 2 * f)[1:-1]))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 <= r <= 4.5 for r in ratios), ratios


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2 ** 32), st.integers(1, 3))
def test_thomas_matches_banded_solver(n, seed, k):
    rng = np.random.default_rng(seed)
    lower, upper = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=(n, k))
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    np.testing.assert_allclose(thomas_solve(lower, diag, upper, rhs), solve_banded((1, 1), ab, rhs),
                               rtol=1e-12, atol=1e-12)


def test_diffusion_eigenmode_decay():
    alpha, dt = 0.7, 1e-3
    g = Grid(1.0, 201)
    f = np.cos(np.pi * g.x)
    out = diffusion_substep(f, alpha, dt, g.dx)
    expected = math.exp(-alpha * math.pi ** 2 * dt) * f
    assert np.max(np.abs(out - expected)) < 10 * (dt ** 2 + g.dx ** 2) * dt


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 60), st.floats(0.01, 5), st.floats(1e-4, 1.0), st.integers(0, 2 ** 32))
def test_diffusion_conserves_mean(nx, alpha, h, seed):
    g = Grid(1.0, nx)
    f = np.random.default_rng(seed).uniform(0, 5, nx)
    out = diffusion_substep(f, alpha, h, g.dx)
    assert abs(g.mean(out) - g.mean(f)) < 1e-12 * max(1.0, g.mean(f))


def test_propagator_matches_substep():
    g = Grid(1.0, 31)
    f = np.random.default_rng(0).uniform(0, 2, 31)
    p = cn_propagator(31, 0.9, 0.01, g.dx)
    np.testing.assert_allclose(p @ f, diffusion_substep(f, 0.9, 0.01, g.dx), rtol=1e-13)


def test_step_flat_equilibrium_unchanged():
    g = Grid(1.0, 21)
    r = E52.minus
    state = SimState(0.0, "-", np.full(21, r.a / r.b), np.zeros(21), g)
    out = step(state, 1e-3, r)
    np.testing.assert_array_equal(out.u, state.u)
    np.testing.assert_array_equal(out.v, 0.0)


def test_step_rejects_large_dt():
    g = Grid(1.0, 21)
    state = SimState(0.0, "+", np.ones(21), np.ones(21), g)
    with pytest.raises(StabilityViolation):
        step(state, 1.0, E52.plus)


def test_zero_predator_stays_zero():
    g = Grid(1.0, 41)
    path = sample_path(E53, "+", 5.0, 2)
    s = simulate(E53, 2 + np.cos(np.pi * g.x), np.zeros(41), path, grid=g)
    assert np.all(s.v == 0.0)


def test_equal_regimes_equilibrium_series():
    r = E52.minus
    env = SwitchingEnvironment(r, r, 5, 5)
    path = sample_path(env, "+", 3.0, 1)
    s = simulate(env, np.full(21, 3.0), np.zeros(21), path, grid=Grid(1.0, 21))
    assert np.all(s.u == 3.0) and np.all(s.v == 0.0)


def test_snapshot_times_and_regimes():
    path = sample_path(E52, "+", 4.0, 5)
    g = Grid(1.0, 21)
    s = simulate(E52, np.full(21, 2.0), np.full(21, 0.5), path, sample_dt=0.25, grid=g)
    assert np.all(np.diff(s.times) > 0)
    assert set(path.jump_times) <= set(s.times)
    assert set(np.arange(17) * 0.25) <= set(np.round(s.times, 12))
    assert list(s.regimes) == list(path.state_at(s.times))
    np.testing.assert_array_equal(s.times, sample_times(4.0, 0.25, path.jump_times))


def test_simulate_rejects_bad_input():
    g = Grid(1.0, 11)
    path = MarkovPath("+", [], 1.0)
    with pytest.raises(ValueError):
        simulate(E52, -np.ones(11), np.ones(11), path, grid=g)
    with pytest.raises(StabilityViolation):
        simulate(E52, np.ones(11), np.ones(11), path, dt=0.5, grid=g)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(0.2, 5), st.floats(0.2, 5), st.integers(1, 3))
def test_positivity_and_bounds(seed, u_amp, v_amp, k):
    g = Grid(1.0, 31)
    u0 = u_amp * (1 + 0.5 * np.cos(k * np.pi * g.x))
    v0 = v_amp * (1 + 0.5 * np.sin(np.pi * g.x) ** 2)
    env = E53 if seed % 2 else E52
    s = simulate(env, u0, v0, sample_path(env, "-", 3.0, seed), grid=g)
    b = bound_constants(env, u0.max(), v0.max())
    assert s.u.min() > 0 and s.v.min() > 0
    assert s.u.max() <= b.m1 and s.v.max() <= b.m2


def test_kpp_constant_regime_converges():
    r = RegimeParams(2.0, 0.5, 1, 1, 1, 1, 0.3, 0.3)
    env = SwitchingEnvironment(r, r, 1, 1)
    g = Grid(1.0, 51)
    s = simulate_kpp(env, 0.5 + 0.4 * np.cos(np.pi * g.x), MarkovPath("+", [], 15.0), grid=g, sample_dt=0.5)
    assert np.max(np.abs(s.u[-1] - 4.0)) < 1e-4


def test_kpp_zero_stays_zero():
    s = simulate_kpp(E52, np.zeros(21), sample_path(E52, "+", 2.0, 0), grid=Grid(1.0, 21))
    assert np.all(s.u == 0)


def test_kpp_example_52_flat_and_inside_support():
    g = Grid(1.0, 51)
    s = simulate_kpp(E52, 2 * np.cos(np.pi * g.x) + 2, sample_path(E52, "+", 30.0, 3), grid=g)
    late = s.u[s.times >= 10]
    assert np.max(late.max(axis=1) - late.min(axis=1)) < 1e-6
    assert late.min() >= 1 - 1e-6 and late.max() <= 3 + 1e-6


def test_prey_tracks_kpp_under_extinction():
    g = Grid(1.0, 51)
    path = sample_path(E52, "+", 40.0, 4)
    u0 = 2 * np.cos(np.pi * g.x) + 2
    full = simulate(E52, u0, 2 * np.sin(np.pi * g.x) ** 2, path, grid=g)
    kpp = simulate_kpp(E52, u0, path, grid=g, dt=full.dt)
    gap = np.max(np.abs(full.u - kpp.u), axis=1)
    assert gap[-1] < 1e-8 and gap[-1] < 1e-3 * gap.max()


def _kpp_final(nx, dt, horizon=1.0):
    r = RegimeParams(1, 1, 1, 1, 1, 1, 0.1, 0.1)
    env = SwitchingEnvironment(r, r, 1, 1)
    g = Grid(1.0, nx)
    u0 = 1 + 0.5 * np.cos(np.pi * g.x)
    return simulate_kpp(env, u0, MarkovPath("+", [], horizon), dt=dt, sample_dt=horizon, grid=g).u[-1]


def test_strang_second_order_in_time():
    sols = [_kpp_final(51, dt) for dt in (0.032, 0.016, 0.008, 0.004)]
    e = [np.max(np.abs(sols[i] - sols[i + 1])) for i in range(3)]
    assert all(3.5 <= e[i] / e[i + 1] <= 4.5 for i in range(2)), e


def test_second_order_in_space():
    sols = [_kpp_final(nx, 5e-4) for nx in (11, 21, 41, 81)]
    coarse = [s[:: 2 ** k] for k, s in enumerate(sols)]
    e = [np.max(np.abs(coarse[i] - coarse[i + 1])) for i in range(3)]
    assert all(3.5 <= e[i] / e[i + 1] <= 4.5 for i in range(2)), e


def test_csv_round_trip_and_determinism():
    g = Grid(1.0, 11)
    path = sample_path(E53, "+", 1.0, 6)
    run = lambda: simulate(E53, np.full(11, 4.0), 1 + g.x, path, grid=g, sample_dt=0.2)
    a, b = run(), run()
    text = a.to_csv("run 1")
    assert text == b.to_csv("run 1")
    assert text.startswith("# run 1\nt,x,u,v\n")
    back = SnapshotSeries.from_csv(text)
    np.testing.assert_array_equal(back.u, a.u)
    np.testing.assert_array_equal(back.v, a.v)
    np.testing.assert_array_equal(back.times, a.times)


def test_stability_cap_examples():
    b = bound_constants(E52, 4.0, 2.0)
    assert stability_cap(E52.regimes(), b) == pytest.approx(0.1 / (3 + 7 + 5 * 4.04))
