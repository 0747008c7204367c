"""Nutrient-clock time change and the limit problem it produces.

With L = int_0^inf ||v||_inf dt and tau = phi(t) = (1/L) int_0^t ||v||_inf,
the population w(., tau) = u(., phi^{-1}(tau)) solves

    w_tau = div(a w^(m-1) grad w) - div(b f(w)) + ell a w,   tau in (0, 1)

with a = L v/||v||_inf and b = L v grad v/||v||_inf. Solving this equation from
recorded coefficients up to tau = 1 gives an independent estimate of the
large-time limit of u.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _kernels as K
from .grid import Grid, integrate
from .model import Case, InitialData, ModelParams, classify
from .monitors import sup_v_integral
from .solver import SAFETY, Schedule, SolverAbort, StopRule, Trajectory, _check_u, _Work, advance

N_TAU = 512


@dataclass(frozen=True)
class TotalClock:
    L: float
    tail: float
    tail_uncertainty: float
    flagged: bool  # tail fit failed or run did not reach v_tol


def compute_L(traj: Trajectory) -> TotalClock:
    """Trapezoid of ||v||_inf over the samples plus an exponential tail."""
    t, s = traj.series("t"), traj.series("sup_v")
    L, tail, ok = sup_v_integral(t, s)
    flagged = not ok or not traj.reached_v_tol
    return TotalClock(L, tail, 0.5 * tail, flagged)


@dataclass(frozen=True)
class PhiSamples:
    t: np.ndarray
    tau: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.t, self.tau)

    def inverse(self, tau):
        """Monotone piecewise-linear inverse; clamps to the last sample time."""
        return np.interp(tau, self.tau, self.t)


def compute_phi(traj: Trajectory, L: float) -> PhiSamples:
    if not L > 0:
        raise ValueError(f"L must be > 0, got {L}")
    t = traj.series("t")
    tau = cumulative_trapezoid(traj.series("sup_v"), t, initial=0.0) / L
    return PhiSamples(t, tau)


def snapshot_coefficients(v: np.ndarray, grid: Grid, L: float):
    """a at cells and b at x-/y-faces for one nutrient field.

    b uses the face value mean(v) * dv/dh, the same drift the primal solver
    upwinds, so both charts share their truncation-error structure.
    """
    v = np.ascontiguousarray(v, dtype=float)
    ny, nx = grid.shape
    mx, my = np.zeros((ny, nx + 1)), np.zeros((ny + 1, nx))
    dx, dy = np.zeros((ny, nx + 1)), np.zeros((ny + 1, nx))
    K.primal_faces(v, grid.hx, grid.hy, mx, my, dx, dy)
    scale = L / float(v.max())
    return v * scale, dx * scale, dy * scale


@dataclass
class Coefficients:
    tau: np.ndarray
    a: np.ndarray  # (n_tau, ny, nx)
    bx: np.ndarray  # (n_tau, ny, nx+1)
    by: np.ndarray  # (n_tau, ny+1, nx)
    L: float
    lambda_hat: float
    tail_nodes: int  # nodes past the last snapshot, frozen at the terminal one
    bounds: dict = field(default_factory=dict)

    def at(self, tau: float):
        """Linear interpolation between tau nodes."""
        j = int(np.searchsorted(self.tau, tau, side="right")) - 1
        j = min(max(j, 0), len(self.tau) - 2)
        w = (tau - self.tau[j]) / (self.tau[j + 1] - self.tau[j])
        w = min(max(w, 0.0), 1.0)
        if w == 0.0:
            return self.a[j], self.bx[j], self.by[j]
        lerp = lambda f: (1.0 - w) * f[j] + w * f[j + 1]
        return lerp(self.a), lerp(self.bx), lerp(self.by)

    @property
    def bounds_ok(self) -> bool:
        b = self.bounds
        return b["a_min"] >= 1 / b["C"] and b["a_max"] <= b["C"] and b["b_max"] <= b["C"] and b["harnack_ok"]


def build_coefficients(traj: Trajectory, L: float, tau_grid: np.ndarray | None = None,
                       phi: PhiSamples | None = None) -> Coefficients:
    """Interpolate a and b onto tau nodes from the stored nutrient snapshots.

    lambda_hat is the smallest min v / max v over all samples, so every
    snapshot satisfies min a >= lambda_hat L.
    """
    if tau_grid is None:
        tau_grid = np.linspace(0.0, 1.0, N_TAU)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if phi is None:
        phi = compute_phi(traj, L)
    g = traj.grid
    st = np.asarray(traj.snap_times)
    s_tau = phi(st)
    if np.any(np.diff(s_tau) <= 0):
        raise ValueError("snapshot clock values must be strictly increasing")
    lam = float(traj.series("harnack_ratio").min())

    cache: dict[int, tuple] = {}

    def coeff(i):
        if i not in cache:
            cache.clear() if len(cache) > 4 else None
            cache[i] = snapshot_coefficients(traj.snap_v[i], g, L)
        return cache[i]

    n = len(tau_grid)
    ny, nx = g.shape
    a = np.empty((n, ny, nx))
    bx = np.empty((n, ny, nx + 1))
    by = np.empty((n, ny + 1, nx))
    tail = 0
    for k, tau in enumerate(tau_grid):
        j = int(np.searchsorted(s_tau, tau, side="right")) - 1
        if j >= len(s_tau) - 1:
            tail += tau > s_tau[-1]
            a[k], bx[k], by[k] = coeff(len(s_tau) - 1)
            continue
        w = (tau - s_tau[j]) / (s_tau[j + 1] - s_tau[j])
        c0, c1 = coeff(j), coeff(j + 1)
        a[k], bx[k], by[k] = [(1 - w) * x0 + w * x1 for x0, x1 in zip(c0, c1)]
    b_max = float(max(np.abs(bx).max(), np.abs(by).max()))
    C = max(L, 1.0 / (lam * L), b_max) + 1.0
    a_min = float(a.min())
    bounds = {"a_min": a_min, "a_max": float(a.max()), "b_max": b_max, "C": C,
              "harnack_ok": bool(a_min >= lam * L * (1 - 1e-6))}
    return Coefficients(tau_grid, a, bx, by, L, lam, int(tail), bounds)


@dataclass
class LimitSolution:
    tau: list
    w: list
    mass: list
    steps: int
    w_final: np.ndarray


def _face_mean(a: np.ndarray, mx: np.ndarray, my: np.ndarray) -> None:
    mx[:, 1:-1] = 0.5 * (a[:, 1:] + a[:, :-1])
    my[1:-1, :] = 0.5 * (a[1:, :] + a[:-1, :])


def solve_limit_problem(coeffs: Coefficients, w0: np.ndarray, params: ModelParams, grid: Grid,
                        out_taus=(), safety: float = SAFETY) -> LimitSolution:
    """Explicit conservative upwind stepping of the rescaled equation to tau = 1.

    Coefficients are frozen over each step at their value at its start.
    """
    w = np.ascontiguousarray(w0, dtype=float).copy()
    grid.check(w)
    work = _Work(grid, params)
    stops = sorted({float(x) for x in out_taus if 0 < x < 1} | {1.0})
    sol = LimitSolution([0.0], [w.copy()], [integrate(w, grid)], 0, w)
    tau = 0.0
    for target in stops:
        while tau < target:
            a, bx, by = coeffs.at(tau)
            _face_mean(a, work.mx, work.my)
            work.dx[:], work.dy[:] = bx, by
            work.load_u(w)
            dt = work.cfl_dt(safety)
            if dt * (1 + 1e-6) >= target - tau:
                dt = target - tau
            if dt < 1e-12:
                raise SolverAbort(f"step size underflow dt={dt:.3e} at tau={tau}")
            w = work.flux_step(w, params.ell * a, dt)
            _check_u(w, tau + dt)
            tau = target if dt == target - tau else tau + dt
            sol.steps += 1
        sol.tau.append(tau)
        sol.w.append(w.copy())
        sol.mass.append(integrate(w, grid))
    sol.w_final = w
    return sol


@dataclass(frozen=True)
class LimitReport:
    w_final: np.ndarray
    u_late: np.ndarray
    rel_gap: float
    heterogeneity: float
    v_decayed: bool

    def passed(self, tol: float = 0.05) -> bool:
        return self.rel_gap <= tol


def compare_limit(w_final: np.ndarray, traj: Trajectory) -> LimitReport:
    u_late = traj.snap_u[-1]
    if np.shape(w_final) != u_late.shape:
        raise ValueError(f"grid mismatch: {np.shape(w_final)} vs {u_late.shape}")
    gap = float(np.max(np.abs(w_final - u_late)) / (np.max(np.abs(u_late)) + 1e-30))
    het = float(np.max(np.abs(u_late - u_late.mean())))
    v_sup = traj.series("sup_v")
    decayed = bool(v_sup[-1] < traj.v_tol * v_sup[0])
    return LimitReport(np.asarray(w_final), u_late, gap, het, decayed)


@dataclass
class RescaledProblem:
    clock: TotalClock
    phi: PhiSamples
    coeffs: Coefficients
    limit: LimitSolution
    report: LimitReport


def rescale_run(traj: Trajectory, n_tau: int = N_TAU, out_taus=()) -> RescaledProblem:
    """Full cross-validation: L, phi, coefficients, w-solve, comparison.

    The w-solve starts from the initial population the primal run actually
    evolved (the regularized one), so both charts share initial data.
    """
    clock = compute_L(traj)
    phi = compute_phi(traj, clock.L)
    coeffs = build_coefficients(traj, clock.L, np.linspace(0.0, 1.0, n_tau), phi)
    limit = solve_limit_problem(coeffs, traj.u0, traj.params, traj.grid, out_taus)
    return RescaledProblem(clock, phi, coeffs, limit, compare_limit(limit.w_final, traj))


# epsilon refinement ----------------------------------------------------------

@dataclass(frozen=True)
class CauchyTable:
    eps: tuple
    gaps: tuple  # ||u_eps_i(T) - u_eps_{i+1}(T)||_inf

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.gaps, self.gaps[1:]))


def _final_u(args):
    init, params, grid, T = args
    traj = advance(init, params, grid, Schedule(sample_dt=T, snapshot_count=1, weak_window=0.0),
                   StopRule(v_tol=0.0, T_max=T))
    return traj.snap_u[-1]


def epsilon_study(init: InitialData, params_base: ModelParams, grid: Grid, eps_list,
                  T: float = 1.0, jobs: int = 1) -> CauchyTable:
    eps = tuple(float(e) for e in eps_list)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if len(eps) < 2:
        return CauchyTable(eps, ())
    if classify(params_base) is Case.III:
        # regularization leaves the data untouched, so all runs coincide
        return CauchyTable(eps, tuple(0.0 for _ in eps[1:]))
    tasks = [(init, replace(params_base, epsilon=e), grid, T) for e in eps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            finals = list(ex.map(_final_u, tasks))
    else:
        finals = [_final_u(t) for t in tasks]
    gaps = tuple(float(np.max(np.abs(x - y))) for x, y in zip(finals, finals[1:]))
    return CauchyTable(eps, gaps)
