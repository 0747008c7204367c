import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemosim.grid import build_grid, integrate
from chemosim.model import FLaw, InitialData, ModelParams
from chemosim.solver import (Schedule, SimState, SolverAbort, StopRule, _check_u, advance,
                             operator_splitting_order_check, stable_dt, step_u, step_v)
from oracles import dense_step_u, dense_step_v

P2 = ModelParams(m=2.0, alpha=1.5)


def random_state(n=8, seed=0, lo=0.0):
    rng = np.random.default_rng(seed)
    g = build_grid(n, n)
    u = lo + rng.random(g.shape)
    v = 0.2 + rng.random(g.shape)
    return SimState(u, v, g)


def gaussian(g, c=(0.5, 0.5), w=0.1, floor=0.1):
    X, Y = g.centers()
    return floor + np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (2 * w * w))


# stable_dt

def test_stable_dt_constant_example():
    g = build_grid(32, 32)
    s = SimState(np.ones(g.shape), np.ones(g.shape), g)
    assert stable_dt(s, P2, g) == pytest.approx(4.8828125e-5, rel=1e-15)


def test_stable_dt_no_transport_is_unbounded():
    g = build_grid(8, 8)
    s = SimState(np.ones(g.shape), np.zeros(g.shape), g)
    assert stable_dt(s, P2, g) == math.inf


def test_stable_dt_scales_with_grid():
    g16, g32 = build_grid(16, 16), build_grid(32, 32)
    one = lambda g: SimState(np.ones(g.shape), np.ones(g.shape), g)  # noqa: E731
    assert stable_dt(one(g16), P2, g16) == pytest.approx(4 * stable_dt(one(g32), P2, g32), rel=1e-14)


def test_stable_dt_inside_stability_region():
    # one step of stable_dt against ten steps of a tenth: the gap is a fraction of the increment
    s = random_state(16, seed=4)
    dt = stable_dt(s, P2, s.grid)
    coarse = step_u(s, dt, P2)
    fine = s.u
    for _ in range(10):
        fine = step_u(SimState(fine, s.v, s.grid), dt / 10, P2)
    assert coarse.min() >= 0
    assert np.abs(coarse - fine).max() < 0.5 * np.abs(coarse - s.u).max()


# step_u

def test_step_u_constant_unchanged():
    g = build_grid(8, 8)
    s = SimState(np.full(g.shape, 0.7), np.full(g.shape, 1.3), g)
    assert np.array_equal(step_u(s, 1e-3, P2), s.u)


def test_step_u_source_increment_telescopes():
    s = random_state(8, seed=1)
    s.u = np.full(s.grid.shape, 0.6)
    p = ModelParams(m=2, alpha=1.5, ell=0.8)
    dt = 0.5 * stable_dt(s, p, s.grid)
    new = step_u(s, dt, p)
    g = s.grid
    assert integrate(new, g) - integrate(s.u, g) == pytest.approx(dt * 0.8 * integrate(0.6 * s.v, g), rel=1e-12)


@pytest.mark.parametrize("params", [P2, ModelParams(m=1.5, alpha=1.2, f_kind=FLaw.ProductLaw, ell=0.5),
                                    ModelParams(m=3.5, alpha=2.6, Cf=2.0)])
def test_step_u_matches_dense_oracle(params):
    s = random_state(8, seed=2, lo=0.05)
    dt = stable_dt(s, params, s.grid)
    got = step_u(s, dt, params)
    ref = dense_step_u(s.u, s.v, dt, s.grid.hx, s.grid.hy, params.m, params.alpha, params.Cf,
                       params.f_kind.value, params.ell)
    np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-13)


def test_step_u_single_peak_matches_dense_oracle():
    g = build_grid(8, 8)
    u = np.zeros(g.shape)
    u[3, 4] = 2.0
    X, Y = g.centers()
    v = 1.0 + 0.5 * np.cos(np.pi * X) * np.cos(np.pi * Y)
    s = SimState(u, v, g)
    dt = stable_dt(s, P2, g)
    ref = dense_step_u(u, v, dt, g.hx, g.hy, 2.0, 1.5, 1.0, "PowerLaw", 0.0)
    np.testing.assert_allclose(step_u(s, dt, P2), ref, rtol=1e-13, atol=1e-13)


def test_step_u_conserves_mass():
    s = random_state(16, seed=5)
    new = step_u(s, stable_dt(s, P2, s.grid), P2)
    assert integrate(new, s.grid) == pytest.approx(integrate(s.u, s.grid), rel=1e-12)


def test_check_u_clamps_and_aborts():
    u = np.ones((4, 4))
    u[1, 2] = -5e-13
    assert _check_u(u, 0.1) == 1 and u[1, 2] == 0.0
    u[2, 3] = -1e-9
    with pytest.raises(SolverAbort, match=r"j=2, i=3"):
        _check_u(u, 0.1)
    u[2, 3] = np.nan
    with pytest.raises(SolverAbort, match="non-finite"):
        _check_u(u, 0.1)


# step_v

def test_step_v_constant_exact():
    g = build_grid(8, 8)
    s = SimState(np.full(g.shape, 2.0), np.full(g.shape, 3.0), g)
    assert np.array_equal(step_v(s, 0.1), np.full(g.shape, 3.0 / 1.2))


def test_step_v_conserves_without_absorption():
    s = random_state(16, seed=3)
    s.u = np.zeros(s.grid.shape)
    new = step_v(s, 0.05)
    assert integrate(new, s.grid) == pytest.approx(integrate(s.v, s.grid), rel=1e-10)


@pytest.mark.parametrize("dt", [1e-4, 1e-2, 1.0])
def test_step_v_matches_dense_solve(dt):
    s = random_state(8, seed=6)
    ref = dense_step_v(s.u, s.v, dt, s.grid.hx, s.grid.hy)
    np.testing.assert_allclose(step_v(s, dt), ref, rtol=1e-9)


def test_step_v_guess_does_not_change_answer():
    s = random_state(8, seed=7)
    a = step_v(s, 0.01)
    b = step_v(s, 0.01, guess=s.v * 0.9)
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_step_v_rejects_bad_dt():
    s = random_state(4)
    with pytest.raises(ValueError):
        step_v(s, 0.0)


# advance

def test_advance_constant_decay():
    g = build_grid(16, 16)
    init = InitialData(np.ones(g.shape), np.ones(g.shape))
    p = ModelParams(m=2, alpha=1.5, epsilon=1e-12)
    traj = advance(init, p, g, Schedule(sample_dt=0.25, dt_max=2e-4, weak_window=0), StopRule(T_max=2.0))
    t, sv = traj.series("t"), traj.series("sup_v")
    assert t[-1] == 2.0 and traj.stopped_by == "T_max"
    assert np.all(np.diff(t) > 0)
    assert np.abs(sv / np.exp(-(1 + 1e-12) * t) - 1).max() < 1e-3
    assert max(np.abs(u - (1 + 1e-12)).max() for u in traj.snap_u) < 1e-10


def test_advance_proliferation_sandwich_and_consumption():
    g = build_grid(16, 16)
    init = InitialData(np.ones(g.shape), np.ones(g.shape))
    p = ModelParams(m=2, alpha=1.5, ell=1.0)
    traj = advance(init, p, g, Schedule(sample_dt=0.5, weak_window=0), StopRule(v_tol=1e-4))
    m = traj.series("mass_u")
    m0 = m[0]
    assert np.all(m >= m0 * (1 - 1e-8)) and np.all(m <= m0 + 1.0 + 1e-8 * m0)
    assert traj.series("consumed")[-1] <= integrate(init.v0, g) * (1 + 1e-8)
    assert traj.reached_v_tol


def test_advance_gaussian_invariants():
    g = build_grid(16, 16)
    init = InitialData(gaussian(g), np.ones(g.shape))
    traj = advance(init, P2, g, Schedule(sample_dt=0.1, weak_window=0.05, weak_samples=8),
                   StopRule(v_tol=0, T_max=1.0))
    m = traj.series("mass_u")
    assert np.abs(m / m[0] - 1).max() < 1e-11
    sv = traj.series("sup_v")
    assert np.all(np.diff(sv) <= 1e-12 * sv[0])
    assert traj.series("min_v").min() > 0
    assert len(traj.snap_u) == len(traj.snap_times) == len(traj.snap_v)
    assert traj.snap_times[-1] == traj.times[-1] == 1.0
    assert traj.steps > 0 and traj.wall_time > 0
    for key in ("consumed", "grad6"):
        assert np.all(np.diff(traj.series(key)) >= 0)


def test_advance_weak_window_stores_every_sample():
    g = build_grid(8, 8)
    init = InitialData(gaussian(g), np.ones(g.shape))
    s = Schedule(sample_dt=0.1, weak_window=0.04, weak_samples=4)
    traj = advance(init, P2, g, s, StopRule(v_tol=0, T_max=0.2))
    assert traj.snap_times[:5] == pytest.approx([0, 0.0025, 0.01, 0.0225, 0.04], abs=1e-15)
    assert traj.times[5:] == pytest.approx([0.14, 0.2])


def test_advance_case_III_requires_positive_u0():
    g = build_grid(8, 8)
    u0 = np.ones(g.shape)
    u0[0, 0] = 0
    with pytest.raises(ValueError, match="case III"):
        advance(InitialData(u0, np.ones(g.shape)), ModelParams(m=3.5, alpha=2.6), g)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(sample_dt=0)
    with pytest.raises(ValueError):
        Schedule(dt_scale=1.5)
    with pytest.raises(ValueError):
        Schedule(snapshot_count=0)


# splitting order

def test_order_constant_is_exact():
    g = build_grid(8, 8)
    rep = operator_splitting_order_check(InitialData(np.ones(g.shape), np.ones(g.shape)), P2, g)
    assert rep.order == "exact" and not rep.flagged


def test_order_gaussian_first_order():
    g = build_grid(32, 32)
    rep = operator_splitting_order_check(InitialData(gaussian(g), np.ones(g.shape)), P2, g, T=0.1)
    assert 0.9 <= rep.order <= 1.5, rep


def test_order_checkerboard_reports_without_failing():
    g = build_grid(16, 16)
    j, i = np.indices(g.shape)
    u0 = np.where((i + j) % 2 == 0, 1.0, 0.1)
    rep = operator_splitting_order_check(InitialData(u0, np.ones(g.shape)), P2, g, T=0.05)
    assert isinstance(rep.order, float) and rep.flagged == (rep.order < 0.9)


# properties

states = st.builds(lambda seed, n, lo: random_state(n, seed, lo),
                   st.integers(0, 2 ** 32 - 1), st.sampled_from([4, 6, 8]), st.sampled_from([0.0, 0.01]))
laws = st.sampled_from([P2, ModelParams(m=1.5, alpha=1.2, f_kind=FLaw.ProductLaw),
                        ModelParams(m=2.5, alpha=2.0, Cf=3.0), ModelParams(m=3.5, alpha=2.6)])


@settings(max_examples=60, deadline=None)
@given(states, laws, st.floats(0.01, 1.0))
def test_prop_step_u_conservative_and_nonnegative(s, params, frac):
    new = step_u(s, frac * stable_dt(s, params, s.grid), params)
    assert new.min() >= 0
    assert integrate(new, s.grid) == pytest.approx(integrate(s.u, s.grid), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(states, st.floats(1e-5, 10.0))
def test_prop_step_v_maximum_principle(s, dt):
    new = step_v(s, dt)
    assert new.min() > 0
    assert new.max() <= s.v.max() * (1 + 1e-12)
    assert integrate(new, s.grid) <= integrate(s.v, s.grid) * (1 + 1e-10)
