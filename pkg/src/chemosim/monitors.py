"""Executable checks of the analytic estimates over a finished trajectory.

Every check is a pure function of the trajectory (and parameters) and returns
a report carrying a ``pass`` flag, the measured quantities and the slack used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

from .grid import Grid
from .model import ModelParams, f_eval
from .solver import Trajectory

LEMMA_IDS = ("L2.2-vin", "L2.2-u1", "L2.2-uv1", "L2.2-nav6v5", "L3.2-uinf",
             "L4.1-harnack", "L4.2-integral", "D1.1-weak")


@dataclass
class LemmaReport:
    lemma_id: str
    passed: bool
    measured: dict = field(default_factory=dict)
    slack: float = 0.0
    first_violation_t: float | None = None
    inconclusive: bool = False

    def to_json(self) -> dict[str, Any]:
        d = {"lemma_id": self.lemma_id, "pass": bool(self.passed),
             "measured": {k: _plain(v) for k, v in self.measured.items()}, "slack": self.slack}
        if self.first_violation_t is not None:
            d["first_violation_t"] = self.first_violation_t
        if self.inconclusive:
            d["inconclusive"] = True
        return d


def _plain(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def check_v_monotone(traj: Trajectory, slack: float = 1e-12) -> LemmaReport:
    t, s = traj.series("t"), traj.series("sup_v")
    if len(s) < 2:
        raise ValueError("need at least two samples")
    tol = slack * s[0]
    up = np.diff(s)
    bad = np.flatnonzero(up > tol)
    rep = LemmaReport("L2.2-vin", bad.size == 0, {"max_increase": float(up.max())}, slack)
    if bad.size:
        rep.first_violation_t = float(t[bad[0] + 1])
        rep.measured["first_violation_index"] = int(bad[0] + 1)
    return rep


def check_mass_sandwich(traj: Trajectory, params: ModelParams, slack: float = 1e-8) -> LemmaReport:
    t, mass = traj.series("t"), traj.series("mass_u")
    lo = mass[0]
    hi = lo + params.ell * traj.series("mass_v")[0]
    tol = slack * lo
    bad = np.flatnonzero((mass < lo - tol) | (mass > hi + tol))
    rep = LemmaReport("L2.2-u1", bad.size == 0,
                      {"lower": lo, "upper": hi, "min_mass": float(mass.min()), "max_mass": float(mass.max())},
                      slack)
    if bad.size:
        rep.first_violation_t = float(t[bad[0]])
    return rep


def check_consumption(traj: Trajectory, slack: float = 1e-8) -> LemmaReport:
    consumed = traj.series("consumed")
    v_mass = traj.series("mass_v")[0]
    ok = bool(consumed[-1] <= v_mass * (1 + slack)) and bool(np.all(np.diff(consumed) >= 0))
    return LemmaReport("L2.2-uv1", ok, {"consumed_total": float(consumed[-1]), "v_mass_initial": v_mass}, slack)


def check_grad6_plateau(traj: Trajectory, slack: float = 0.01) -> LemmaReport:
    t, g = traj.series("t"), traj.series("grad6")
    total = float(g[-1])
    half = float(np.interp(t[-1] / 2, t, g))
    late = total - half
    ok = math.isfinite(total) and late <= slack * total
    rep = LemmaReport("L2.2-nav6v5", ok, {"grad6_total": total, "late_increment": late}, slack)
    if not traj.reached_v_tol and math.isfinite(total):
        rep.passed, rep.inconclusive = True, True
    return rep


def check_u_bounded(traj: Trajectory, params: ModelParams, slack: float = 1e-6) -> LemmaReport:
    """Running max of ||u||_inf must flatten over the final quarter.

    With proliferation the remaining nutrient can still lift u by at most
    sup_u * ell * int ||v||_inf over the quarter; that growth is allowed.
    """
    t, s = traj.series("t"), traj.series("sup_u")
    run = np.maximum.accumulate(s)
    k = int(np.searchsorted(t, 0.75 * t[-1]))
    k = min(k, len(t) - 1)
    rise = float(run[-1] - run[k])
    sv = traj.series("sup_v")
    allowed = slack * run[-1]
    if params.ell > 0:
        tail_v = float(np.trapezoid(sv[k:], t[k:]))
        allowed += run[-1] * math.expm1(params.ell * tail_v)
    return LemmaReport("L3.2-uinf", rise <= allowed,
                       {"bound": float(run[-1]), "final_quarter_rise": rise, "allowed_rise": allowed}, slack)


# Harnack ratio ---------------------------------------------------------------

@dataclass
class HarnackReport:
    times: np.ndarray
    ratios: np.ndarray
    burn_in: float
    lambda_hat: float
    final_slope: float
    passed: bool
    inconclusive: bool = False  # run ended before the burn-in; scanned every sample instead

    def to_lemma(self) -> LemmaReport:
        return LemmaReport("L4.1-harnack", self.passed,
                           {"lambda_hat": self.lambda_hat, "final_quarter_slope": self.final_slope,
                            "burn_in": self.burn_in, "min_ratio_all": float(self.ratios.min())}, 1e-6,
                           inconclusive=self.inconclusive)


def harnack_scan(traj: Trajectory, burn_in: float = 1.0, slope_tol: float = 1e-6) -> HarnackReport:
    t, r = traj.series("t"), traj.series("harnack_ratio")
    after = t >= burn_in
    if not after.any():
        raise ValueError(f"no samples beyond burn-in {burn_in}")
    lam = float(r[after].min())
    t0 = t[after][0]
    quarter = t >= t0 + 0.75 * (t[-1] - t0)
    slope = 0.0
    if quarter.sum() >= 2 and np.ptp(t[quarter]) > 0:
        slope = float(np.polyfit(t[quarter], r[quarter], 1)[0])
    ok = lam > 0 and slope >= -slope_tol
    return HarnackReport(t, r, burn_in, lam, slope, ok)


# Moser exponent ladder -------------------------------------------------------

def ladder_exponents(m: float, k_max: int, p0: int = 4) -> list[Fraction]:
    p = [Fraction(p0)]
    for _ in range(k_max):
        p.append(2 * p[-1] + 2 - Fraction(m))
    return p


def ladder_envelope(m: float, p0: int = 4) -> tuple[Fraction, Fraction]:
    """(c1, c2) with c1 = p0 - (2-m)_-, c2 = p0 + (2-m)_+."""
    d = 2 - Fraction(m)
    return Fraction(p0) - max(-d, Fraction(0)), Fraction(p0) + max(d, Fraction(0))


def log_power_integral(u: np.ndarray, p: float, cell_area: float) -> float:
    """log of sum(u^p) * cell_area without overflow."""
    lu = np.log(np.maximum(u, 1e-300))
    return float(logsumexp(p * lu.ravel())) + math.log(cell_area)


@dataclass
class LadderReport:
    p: list  # exact exponents
    log_M: np.ndarray  # log of 1 + sup_t int u^p_k
    norms: np.ndarray  # (n_snapshots, k_max+1) normalized L^p_k norms
    sup_u: np.ndarray
    envelope_ok: bool
    monotone_ok: bool
    approach_ok: bool

    @property
    def passed(self) -> bool:
        return self.envelope_ok and self.monotone_ok and self.approach_ok


def ladder_scan(traj: Trajectory, params: ModelParams, k_max: int = 8, near: float = 0.05,
                p_near: float = 256.0) -> LadderReport:
    if not traj.snap_u:
        raise ValueError("no stored snapshots")
    g = traj.grid
    p = ladder_exponents(params.m, k_max)
    c1, c2 = ladder_envelope(params.m)
    envelope_ok = all(c1 * 2 ** k <= pk <= c2 * 2 ** k for k, pk in enumerate(p))
    envelope_ok &= all(b > a for a, b in zip(p, p[1:]))
    pf = [float(x) for x in p]
    logs = np.array([[log_power_integral(u, pk, g.cell_area) for pk in pf] for u in traj.snap_u])
    log_M = np.logaddexp(0.0, logs.max(axis=0))
    norms = np.exp((logs - math.log(g.area)) / np.array(pf))
    sup_u = np.array([u.max() for u in traj.snap_u])
    monotone_ok = bool(np.all(np.diff(norms, axis=1) >= -1e-12 * norms[:, 1:]))
    high = np.array(pf) >= p_near
    approach_ok = bool(np.all(norms[:, high] >= (1 - near) * sup_u[:, None])) if high.any() else True
    return LadderReport(p, log_M, norms, sup_u, envelope_ok, monotone_ok, approach_ok)


# time budgets ----------------------------------------------------------------

def sup_v_integral(t: np.ndarray, sup_v: np.ndarray, with_tail: bool = True):
    """Trapezoid of ||v||_inf plus an exponential tail fitted over the last decade.

    Returns (integral including tail, tail, tail_ok); tail_ok is False when the
    final decade does not decay, in which case no tail is added.
    """
    body = float(np.trapezoid(sup_v, t))
    if not with_tail:
        return body, 0.0, False
    last = sup_v[-1]
    sel = sup_v <= 10 * last
    k0 = int(np.argmax(sel)) if sel.any() else len(t) - 1
    k0 = min(k0, len(t) - 2)
    tt, ss = t[k0:], sup_v[k0:]
    if len(tt) < 2 or np.ptp(tt) == 0 or last <= 0:
        return body, 0.0, False
    rate = -float(np.polyfit(tt, np.log(ss), 1)[0])
    if not rate > 0:
        return body, 0.0, False
    tail = last / rate
    return body + tail, tail, True


@dataclass
class BudgetReport:
    consumed_total: float
    v_mass_initial: float
    grad6_total: float
    vinf_time_integral: float
    bound_rhs: float
    lambda_hat: float
    consumption_ok: bool
    integral_ok: bool
    inconclusive: bool

    @property
    def passed(self) -> bool:
        return self.consumption_ok and (self.integral_ok or self.inconclusive)

    def to_lemma(self) -> LemmaReport:
        return LemmaReport("L4.2-integral", self.integral_ok or self.inconclusive,
                           {"vinf_time_integral": self.vinf_time_integral, "bound_rhs": self.bound_rhs,
                            "lambda_hat": self.lambda_hat, "consumed_total": self.consumed_total},
                           0.05, inconclusive=self.inconclusive)


def budget_scan(traj: Trajectory, lambda_hat: float | None = None, slack: float = 0.05) -> BudgetReport:
    """Nutrient budgets; ``lambda_hat`` defaults to the Harnack scan with burn-in 1.

    The integral bound uses the mass of the initial population actually
    evolved (the regularized one).
    """
    if lambda_hat is None:
        lambda_hat = harnack_scan(traj).lambda_hat
    t = traj.series("t")
    consumed = float(traj.series("consumed")[-1])
    v_mass = float(traj.series("mass_v")[0])
    u_mass = float(traj.series("mass_u")[0])
    integral, _, _ = sup_v_integral(t, traj.series("sup_v"), with_tail=traj.reached_v_tol)
    bound = v_mass / (lambda_hat * u_mass)
    return BudgetReport(consumed, v_mass, float(traj.series("grad6")[-1]), integral, bound, lambda_hat,
                        consumed <= v_mass * (1 + 1e-8), integral <= bound * (1 + slack),
                        not traj.reached_v_tol)


# weak formulation ------------------------------------------------------------

def bump(t, T):
    """C^2 cutoff (1 - (t/T)^2)^3 on [0, T), zero afterwards."""
    t = np.asarray(t, dtype=float)
    s = np.clip(t / T, 0.0, 1.0)
    return (1 - s ** 2) ** 3


def bump_dt(t, T):
    t = np.asarray(t, dtype=float)
    s = np.clip(t / T, 0.0, 1.0)
    return -6 * s * (1 - s ** 2) ** 2 / T


@dataclass(frozen=True)
class WeakResidual:
    r_u: float
    r_v: float
    T_test: float
    n_snapshots: int
    scale_u: float
    scale_v: float


def _mode(grid: Grid, k: int, l: int):
    """cos(k pi x/Lx) cos(l pi y/Ly) at cells, its gradient at x-/y-faces and its Laplacian."""
    ax, ay = k * math.pi / grid.Lx, l * math.pi / grid.Ly
    X, Y = grid.centers()
    X_cell = np.cos(ax * X) * np.cos(ay * Y)
    xf, yf = grid.x_faces()
    gx = -ax * np.sin(ax * xf) * np.cos(ay * yf)
    xf, yf = grid.y_faces()
    gy = -ay * np.cos(ax * xf) * np.sin(ay * yf)
    lap = -(ax ** 2 + ay ** 2) * X_cell
    return X_cell, gx, gy, lap


def _spatial_terms(u, v, params: ModelParams, grid: Grid, mode):
    """Per-snapshot integrals: (int u X, rhs_u, int v X, rhs_v) where rhs_* are
    the right-hand sides with the time factor of the test function removed."""
    X, gX_x, gX_y, lapX = mode
    A = grid.cell_area
    m = params.m
    um = u ** m
    fu = f_eval(u, params)
    dvx = np.zeros_like(gX_x)
    dvy = np.zeros_like(gX_y)
    dvx[:, 1:-1] = (v[:, 1:] - v[:, :-1]) / grid.hx
    dvy[1:-1, :] = (v[1:, :] - v[:-1, :]) / grid.hy
    # face averages of cell quantities
    um_x = np.zeros_like(gX_x)
    um_y = np.zeros_like(gX_y)
    um_x[:, 1:-1] = 0.5 * (um[:, 1:] + um[:, :-1])
    um_y[1:-1, :] = 0.5 * (um[1:, :] + um[:-1, :])
    fv = fu * v
    fv_x = np.zeros_like(gX_x)
    fv_y = np.zeros_like(gX_y)
    fv_x[:, 1:-1] = 0.5 * (fv[:, 1:] + fv[:, :-1])
    fv_y[1:-1, :] = 0.5 * (fv[1:, :] + fv[:-1, :])
    grad_term = lambda c_x, c_y: (np.sum(c_x * dvx * gX_x) + np.sum(c_y * dvy * gX_y)) * A
    rhs_u = (grad_term(um_x, um_y) / m + np.sum(um * v * lapX) * A / m
             + grad_term(fv_x, fv_y) + params.ell * np.sum(u * v * X) * A)
    rhs_v = grad_term(1.0, 1.0) + np.sum(u * v * X) * A
    return np.sum(u * X) * A, rhs_u, np.sum(v * X) * A, rhs_v


def _time_integral(t: np.ndarray, series: np.ndarray, weight, n_gauss: int = 6) -> float:
    """int_0^T S(t) w(t) dt with S a cubic spline through the samples and
    Gauss-Legendre nodes on every interval (exact for constant S)."""
    if len(t) < 4:
        raise ValueError("need at least 4 snapshots for the time quadrature")
    spline = CubicSpline(t, series)
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    a, b = t[:-1, None], t[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
    return float(np.sum(0.5 * (b - a) * w * spline(nodes) * weight(nodes)))


def weak_residual(traj: Trajectory, params: ModelParams, k: int = 0, l: int = 0,
                  T_test: float | None = None, min_snapshots: int = 64) -> WeakResidual:
    """Gaps in both weak identities for the test function
    cos(k pi x/Lx) cos(l pi y/Ly) * bump(t / T_test)."""
    ts = np.asarray(traj.snap_times)
    if T_test is None:
        T_test = _default_window(ts, min_snapshots)
    sel = ts <= T_test * (1 + 1e-12)
    if sel.sum() < min_snapshots + 1 or abs(ts[sel][-1] - T_test) > 1e-9 * max(T_test, 1):
        raise ValueError(f"need >= {min_snapshots} snapshot intervals ending exactly at T_test={T_test}")
    idx = np.flatnonzero(sel)
    t = ts[idx]
    g = traj.grid
    mode = _mode(g, k, l)
    terms = np.array([_spatial_terms(traj.snap_u[i], traj.snap_v[i], params, g, mode) for i in idx])
    uX, rhs_u, vX, rhs_v = terms.T
    psi = lambda s: bump(s, T_test)
    dpsi = lambda s: bump_dt(s, T_test)
    lhs_u = -_time_integral(t, uX, dpsi) - uX[0] * psi(0.0)
    r_u = abs(lhs_u - _time_integral(t, rhs_u, psi))
    lhs_v = _time_integral(t, vX, dpsi) + vX[0] * psi(0.0)
    r_v = abs(lhs_v - _time_integral(t, rhs_v, psi))
    return WeakResidual(r_u, r_v, float(T_test), int(len(t)),
                        float(np.sum(np.abs(traj.u0)) * g.cell_area), float(np.sum(np.abs(traj.v0)) * g.cell_area))


def _default_window(ts: np.ndarray, min_snapshots: int) -> float:
    if len(ts) < min_snapshots + 1:
        raise ValueError(f"only {len(ts)} snapshots stored, need {min_snapshots + 1}")
    return float(ts[min_snapshots])


def check_weak(traj: Trajectory, params: ModelParams, T_test: float | None = None,
               tol_u: float | None = None, tol_v: float = 1e-6) -> LemmaReport:
    """Constant-in-space test function: both mass identities to quadrature accuracy.

    Inconclusive (not failed) when the run is too short to store the default
    test window.
    """
    if T_test is None:
        try:
            _default_window(np.asarray(traj.snap_times), 64)
        except ValueError as e:
            return LemmaReport("D1.1-weak", True, {"reason": str(e)}, tol_v, inconclusive=True)
    res = weak_residual(traj, params, 0, 0, T_test)
    if tol_u is None:
        tol_u = 1e-10 if params.ell == 0 else tol_v
    ok = res.r_u <= tol_u * res.scale_u and res.r_v <= tol_v * res.scale_v
    return LemmaReport("D1.1-weak", ok,
                       {"r_u": res.r_u, "r_v": res.r_v, "T_test": res.T_test, "snapshots": res.n_snapshots,
                        "tol_u": tol_u, "tol_v": tol_v}, tol_v)


def run_all(traj: Trajectory, params: ModelParams, burn_in: float = 1.0) -> list[LemmaReport]:
    if traj.times[-1] >= burn_in:
        harn = harnack_scan(traj, burn_in)
    else:
        harn = harnack_scan(traj, 0.0)
        harn.inconclusive = True
    return [
        check_v_monotone(traj),
        check_mass_sandwich(traj, params),
        check_consumption(traj),
        check_grad6_plateau(traj),
        check_u_bounded(traj, params),
        harn.to_lemma(),
        budget_scan(traj, harn.lambda_hat).to_lemma(),
        check_weak(traj, params),
    ]
