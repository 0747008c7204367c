"""Time integration of the regularized system.

Each step first solves the nutrient equation implicitly (diffusion and
absorption), then advances the population explicitly with conservative face
fluxes: arithmetic-mean mobility for the degenerate diffusion and upwinded
taxis. Step sizes come from the explicit update's positivity limit.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .grid import Grid, integrate
from .model import FLaw, InitialData, ModelParams, classify, regularize_initial

log = logging.getLogger(__name__)

SAFETY = 0.4
CLAMP_TOL = 1e-12
CG_TOL = 1e-12


class SolverAbort(RuntimeError):
    pass


@dataclass
class SimState:
    u: np.ndarray
    v: np.ndarray
    grid: Grid
    t: float = 0.0
    consumed: float = 0.0
    grad6_budget: float = 0.0


@dataclass(frozen=True)
class Schedule:
    """When to sample diagnostics and store fields.

    The first ``weak_window`` time units are sampled ``weak_samples`` times
    with every sample stored (dense fields for weak-form quadrature) and
    stepped with an extra ``weak_dt_scale`` factor and at most ``weak_dt_max``:
    the O(dt) time-stepping gap dominates the error in the integral
    identities there. Later
    snapshots are taken at sample times, spaced roughly uniformly in the
    nutrient clock int_0^t ||v||_inf ds so that they stay evenly spread in the
    rescaled time; ``snapshot_count=None`` stores every sample.
    """

    sample_dt: float = 0.05
    snapshot_count: int | None = 256
    dt_max: float = math.inf
    dt_scale: float = 1.0
    weak_window: float = 0.25
    weak_samples: int = 64
    weak_dt_scale: float = 0.5
    weak_dt_max: float = 1e-5

    def sample_time(self, k: int) -> float:
        n = self.weak_samples if self.weak_window > 0 else 0
        if k <= n:
            # graded toward t=0, where the initial layer moves fastest
            return self.weak_window * (k / n) ** 2
        return self.weak_window * (n > 0) + (k - n) * self.sample_dt

    def in_weak_window(self, k: int) -> bool:
        return self.weak_window > 0 and k <= self.weak_samples

    def __post_init__(self):
        if not self.sample_dt > 0:
            raise ValueError("sample_dt must be > 0")
        if self.snapshot_count is not None and self.snapshot_count < 1:
            raise ValueError("snapshot_count must be >= 1 or None")
        if not (self.dt_max > 0 and 0 < self.dt_scale <= 1 and 0 < self.weak_dt_scale <= 1
                and self.weak_dt_max > 0):
            raise ValueError("need dt_max > 0 and dt scales in (0, 1]")
        if self.weak_window < 0 or (self.weak_window > 0 and self.weak_samples < 1):
            raise ValueError("need weak_window >= 0 and weak_samples >= 1")


@dataclass(frozen=True)
class StopRule:
    v_tol: float = 1e-6
    T_max: float = 1e3


DIAG_KEYS = ("sup_v", "min_v", "mass_u", "mass_v", "consumed", "grad6", "sup_u", "lp_p64")


@dataclass
class Trajectory:
    grid: Grid
    params: ModelParams
    u0: np.ndarray  # regularized initial population actually evolved
    v0: np.ndarray
    times: list = field(default_factory=list)
    diag: dict = field(default_factory=lambda: {k: [] for k in DIAG_KEYS})
    snap_times: list = field(default_factory=list)
    snap_u: list = field(default_factory=list)
    snap_v: list = field(default_factory=list)
    steps: int = 0
    wall_time: float = 0.0
    stopped_by: str = ""
    events: list = field(default_factory=list)
    v_tol: float = 1e-6

    def series(self, key: str) -> np.ndarray:
        if key == "t":
            return np.asarray(self.times, dtype=float)
        if key == "harnack_ratio":
            return self.series("min_v") / self.series("sup_v")
        return np.asarray(self.diag[key], dtype=float)

    @property
    def reached_v_tol(self) -> bool:
        return self.stopped_by == "v_tol"

    def record(self, state: SimState) -> None:
        u, v, g = state.u, state.v, state.grid
        self.times.append(state.t)
        d = self.diag
        d["sup_v"].append(float(v.max()))
        d["min_v"].append(float(v.min()))
        d["mass_u"].append(integrate(u, g))
        d["mass_v"].append(integrate(v, g))
        d["consumed"].append(state.consumed)
        d["grad6"].append(state.grad6_budget)
        d["sup_u"].append(float(u.max()))
        d["lp_p64"].append(normalized_lp(u, 64.0))

    def snapshot(self, state: SimState) -> None:
        self.snap_times.append(state.t)
        self.snap_u.append(state.u.copy())
        self.snap_v.append(state.v.copy())


def normalized_lp(u: np.ndarray, p: float) -> float:
    """(mean of u^p)^(1/p), scaled by the max to avoid overflow."""
    top = float(np.max(u))
    if top <= 0:
        return 0.0
    return top * float(np.mean((np.maximum(u, 0.0) / top) ** p)) ** (1.0 / p)


def _fargs(params: ModelParams):
    kind = K.PRODUCT if params.f_kind is FLaw.ProductLaw else K.POWER
    return float(params.m), kind, float(params.Cf), float(params.alpha)


class _Work:
    """Reusable face/cell work arrays for one explicit flux step.

    ``mx, my`` hold face mobility coefficients (mean v in the primal chart),
    ``dx, dy`` face drifts, ``px, py`` mean(u)^(m-1) and ``fu`` f(u) per cell.
    """

    def __init__(self, grid: Grid, params: ModelParams):
        ny, nx = grid.shape
        self.grid = grid
        self.fargs = _fargs(params)
        self.mx = np.zeros((ny, nx + 1))
        self.my = np.zeros((ny + 1, nx))
        self.dx = np.zeros((ny, nx + 1))
        self.dy = np.zeros((ny + 1, nx))
        self.px = np.zeros((ny, nx + 1))
        self.py = np.zeros((ny + 1, nx))
        self.fu = np.zeros((ny, nx))
        self.rate = 0.0

    def load_v(self, v: np.ndarray) -> "_Work":
        g = self.grid
        K.primal_faces(v, g.hx, g.hy, self.mx, self.my, self.dx, self.dy)
        return self

    def load_u(self, u: np.ndarray) -> "_Work":
        m, kind, cf, alpha = self.fargs
        self.rate = K.u_powers(u, m, kind, cf, alpha, self.px, self.py, self.fu)
        return self

    def cfl_dt(self, safety: float = SAFETY) -> float:
        """Explicit-step limit for the loaded coefficients."""
        g = self.grid
        dmax, vel = K.step_limits(self.px, self.py, self.mx, self.my, self.dx, self.dy)
        dt = math.inf
        if dmax > 0:
            dt = safety / (4.0 * (g.hx ** -2 + g.hy ** -2) * dmax)
        if vel > 0 and self.rate > 0:
            dt = min(dt, safety * min(g.hx, g.hy) / (2.0 * self.rate * vel))
        return dt

    def flux_step(self, u: np.ndarray, src: np.ndarray, dt: float) -> np.ndarray:
        g = self.grid
        out = np.empty_like(u)
        K.flux_update(u, self.px, self.py, self.fu, self.mx, self.my, self.dx, self.dy, src,
                      g.hx, g.hy, dt, out)
        return out


def stable_dt(state: SimState, params: ModelParams, grid: Grid) -> float:
    """Largest step keeping the explicit population update nonnegative, times 0.4.

    Infinite when both diffusion and drift vanish; callers cap it by the
    sampling schedule.
    """
    u = np.ascontiguousarray(state.u, dtype=float)
    v = np.ascontiguousarray(state.v, dtype=float)
    return _Work(grid, params).load_v(v).load_u(u).cfl_dt()


def step_v(state: SimState, dt: float, guess: np.ndarray | None = None) -> np.ndarray:
    """Solve (I - dt*Lap + dt*diag(u)) v_new = v by preconditioned CG."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    g = state.grid
    u = np.ascontiguousarray(state.u, dtype=float)
    v = np.ascontiguousarray(state.v, dtype=float)
    x = v / (1.0 + dt * u)
    if guess is not None:
        # keep the diagonal guess when it is already converged (spatially flat v):
        # iterating on pure round-off would seed spurious gradients
        r = np.empty_like(v)
        K.apply_implicit(x, u, dt, g.hx, g.hy, r)
        if np.linalg.norm(v - r) > CG_TOL * np.linalg.norm(v):
            x = np.array(guess, dtype=float)
    it, res = K.cg_implicit(v, u, dt, g.hx, g.hy, x, CG_TOL, 10 * u.size)
    if it < 0:
        raise SolverAbort(f"nutrient solve did not converge (relative residual {res:.3e}) at t={state.t}")
    return x


def _check_u(u_new: np.ndarray, t: float) -> int:
    """Clamp round-off negatives; return how many cells were clamped."""
    lo = u_new.min()
    if not np.isfinite(lo) or not np.isfinite(u_new.max()):
        bad = np.argwhere(~np.isfinite(u_new))[0]
        raise SolverAbort(f"non-finite population at cell (j={bad[0]}, i={bad[1]}), t={t}")
    if lo >= 0:
        return 0
    if lo < -CLAMP_TOL:
        j, i = np.unravel_index(np.argmin(u_new), u_new.shape)
        raise SolverAbort(f"negative population {lo:.3e} at cell (j={j}, i={i}), t={t}")
    neg = u_new < 0
    u_new[neg] = 0.0
    return int(neg.sum())


def step_u(state: SimState, dt: float, params: ModelParams) -> np.ndarray:
    """Explicit conservative population update using the (already advanced) v in ``state``."""
    g = state.grid
    u = np.ascontiguousarray(state.u, dtype=float)
    v = np.ascontiguousarray(state.v, dtype=float)
    out = _Work(g, params).load_v(v).load_u(u).flux_step(u, params.ell * v, dt)
    _check_u(out, state.t + dt)
    return out


def advance(init: InitialData, params: ModelParams, grid: Grid,
            schedule: Schedule = Schedule(), stop: StopRule = StopRule()) -> Trajectory:
    case = classify(params)
    init.validate(grid, case)
    t_wall = time.perf_counter()
    u = np.ascontiguousarray(regularize_initial(init, params), dtype=float)
    v = np.ascontiguousarray(init.v0, dtype=float).copy()
    traj = Trajectory(grid, params, u.copy(), v.copy(), v_tol=stop.v_tol)
    state = SimState(u, v, grid)
    work = _Work(grid, params)
    hx, hy = grid.hx, grid.hy
    v0_sup = float(v.max())
    clock = 0.0
    snap_gap = None
    if schedule.snapshot_count is not None:
        # rough nutrient-clock total, smaller when proliferation raises consumption
        m0, v_mass = integrate(u, grid), integrate(v, grid)
        snap_gap = v_mass / (m0 + params.ell * v_mass) / schedule.snapshot_count
    last_snap_clock = 0.0
    traj.record(state)
    traj.snapshot(state)
    k_sample = 1
    clamped = 0
    v_prev, dt_prev = None, 0.0

    def done(st: SimState) -> str:
        if st.v.max() < stop.v_tol * v0_sup:
            return "v_tol"
        if st.t >= stop.T_max:
            return "T_max"
        return ""

    while not (reason := done(state)):
        t = state.t
        t_next = min(schedule.sample_time(k_sample), stop.T_max)
        work.load_u(state.u).load_v(state.v)
        dt = work.cfl_dt() * schedule.dt_scale
        if schedule.in_weak_window(k_sample):
            dt = min(dt * schedule.weak_dt_scale, schedule.weak_dt_max)
        dt = min(dt, schedule.dt_max)
        # absorb slivers left by floating accumulation into this step
        hit_sample = dt * (1.0 + 1e-6) >= t_next - t
        if hit_sample:
            dt = t_next - t
        if dt < 1e-12 * max(t, t_next):
            raise SolverAbort(f"step size underflow dt={dt:.3e} at t={t} after {traj.steps} steps")

        # extrapolate the previous increment as the CG starting point
        guess = None if v_prev is None else state.v + (dt / dt_prev) * (state.v - v_prev)
        v_new = step_v(state, dt, guess)
        limit = work.load_v(v_new).cfl_dt(safety=0.5)
        if dt > limit:
            # fresh nutrient steeper than the one the step was sized on
            dt, hit_sample = limit, False
            v_new = step_v(state, dt)
            work.load_v(v_new)
        u_new = work.flux_step(state.u, params.ell * v_new, dt)
        n = _check_u(u_new, t + dt)
        if n:
            clamped += n
            traj.events.append(f"t={t + dt:.6g}: clamped {n} cell(s) from [-1e-12, 0)")

        # quadratures consistent with the scheme's own consumption term
        state.consumed += dt * float(np.sum(state.u * v_new)) * grid.cell_area
        state.grad6_budget += dt * K.grad6_density_sum(v_new, hx, hy) * grid.cell_area
        clock += 0.5 * dt * (state.v.max() + v_new.max())
        v_prev, dt_prev = state.v, dt
        state.u, state.v = u_new, v_new
        state.t = t_next if hit_sample else t + dt
        traj.steps += 1

        if hit_sample:
            traj.record(state)
            if (schedule.in_weak_window(k_sample) or snap_gap is None
                    or clock - last_snap_clock >= snap_gap):
                traj.snapshot(state)
                last_snap_clock = clock
            k_sample += 1
    if traj.times[-1] != state.t:
        traj.record(state)
    if traj.snap_times[-1] != state.t:
        traj.snapshot(state)
    traj.stopped_by = reason
    traj.wall_time = time.perf_counter() - t_wall
    if clamped:
        log.info("clamped %d cell values in total", clamped)
    log.info("stopped by %s at t=%.6g after %d steps (%.2fs)", reason, state.t, traj.steps, traj.wall_time)
    return traj


@dataclass(frozen=True)
class OrderReport:
    order: float | str  # "exact" when the runs coincide
    diffs: tuple
    flagged: bool


def operator_splitting_order_check(init: InitialData, params: ModelParams, grid: Grid,
                                   T: float = 0.1) -> OrderReport:
    """Empirical temporal order from runs with step sizes scaled by 1, 1/2, 1/4."""
    finals = []
    for scale in (1.0, 0.5, 0.25):
        traj = advance(init, params, grid,
                       Schedule(sample_dt=T, snapshot_count=None, dt_scale=scale, weak_window=0.0),
                       StopRule(v_tol=0.0, T_max=T))
        finals.append(traj.snap_u[-1])
    d1 = float(np.max(np.abs(finals[0] - finals[1])))
    d2 = float(np.max(np.abs(finals[1] - finals[2])))
    if d1 == 0.0 and d2 == 0.0:
        return OrderReport("exact", (d1, d2), False)
    if d2 == 0.0:
        return OrderReport(math.inf, (d1, d2), False)
    order = math.log2(d1 / d2)
    return OrderReport(order, (d1, d2), order < 0.9)
