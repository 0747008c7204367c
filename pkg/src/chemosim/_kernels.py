"""Compiled stencil loops. Arrays are (ny, nx) cells, (ny, nx+1) x-faces and
(ny+1, nx) y-faces. Loops run in a fixed order so results are bit-reproducible."""
import numpy as np
from numba import njit

PRODUCT, POWER = 0, 1


@njit(cache=True)
def primal_faces(v, hx, hy, mob_x, mob_y, drift_x, drift_y):
    """Face means of v and the taxis drift mean(v) * dv/dh; boundary faces stay 0."""
    ny, nx = v.shape
    mob_x[:, :] = 0.0
    mob_y[:, :] = 0.0
    drift_x[:, :] = 0.0
    drift_y[:, :] = 0.0
    for j in range(ny):
        for i in range(1, nx):
            vb = 0.5 * (v[j, i - 1] + v[j, i])
            mob_x[j, i] = vb
            drift_x[j, i] = vb * (v[j, i] - v[j, i - 1]) / hx
    for j in range(1, ny):
        for i in range(nx):
            vb = 0.5 * (v[j - 1, i] + v[j, i])
            mob_y[j, i] = vb
            drift_y[j, i] = vb * (v[j, i] - v[j - 1, i]) / hy


@njit(cache=True)
def _pow(x, a):
    if a == 0.0:
        return 1.0
    if a == 1.0:
        return x
    if a == 0.5:
        return np.sqrt(x)
    if a == 2.0:
        return x * x
    if a == 1.5:
        return x * np.sqrt(x)
    return x ** a


@njit(cache=True)
def u_powers(u, m, kind, cf, alpha, px, py, fu):
    """Fill face mobility powers mean(u)^(m-1), cell values f(u); return the max
    outflow rate max(f'(u), f(u)/u) over cells."""
    ny, nx = u.shape
    px[:, :] = 0.0
    py[:, :] = 0.0
    for j in range(ny):
        for i in range(1, nx):
            px[j, i] = _pow(0.5 * (u[j, i - 1] + u[j, i]), m - 1.0)
    for j in range(1, ny):
        for i in range(nx):
            py[j, i] = _pow(0.5 * (u[j - 1, i] + u[j, i]), m - 1.0)
    rate = 0.0
    for j in range(ny):
        for i in range(nx):
            x = u[j, i]
            if kind == PRODUCT:
                g = cf * _pow(x + 1.0, alpha - 1.0)
                fu[j, i] = x * g
                r = max(g, g * (1.0 + (alpha - 1.0) * x / (x + 1.0)))
            else:
                fu[j, i] = cf * _pow(x, alpha)
                if x > 0.0:
                    g = fu[j, i] / x
                    r = max(g, alpha * g)
                elif alpha > 1.0:
                    r = 0.0
                else:
                    r = np.inf
            rate = max(rate, r)
    return rate


@njit(cache=True)
def step_limits(px, py, mob_x, mob_y, drift_x, drift_y):
    """Return (max diffusivity over faces, max |drift| over faces)."""
    dmax = 0.0
    vel = 0.0
    for j in range(mob_x.shape[0]):
        for i in range(mob_x.shape[1]):
            dmax = max(dmax, mob_x[j, i] * px[j, i])
            vel = max(vel, abs(drift_x[j, i]))
    for j in range(mob_y.shape[0]):
        for i in range(mob_y.shape[1]):
            dmax = max(dmax, mob_y[j, i] * py[j, i])
            vel = max(vel, abs(drift_y[j, i]))
    return dmax, vel


@njit(cache=True)
def flux_update(u, px, py, fu, mob_x, mob_y, drift_x, drift_y, src, hx, hy, dt, out):
    """out = u - dt * div J + dt * src * u with
    J = -mob * mean(u)^(m-1) * du/dh + drift * f(u_upwind)."""
    ny, nx = u.shape
    for j in range(ny):
        for i in range(nx):
            out[j, i] = u[j, i] + dt * src[j, i] * u[j, i]
    for j in range(ny):
        for i in range(1, nx):
            flux = -mob_x[j, i] * px[j, i] * (u[j, i] - u[j, i - 1]) / hx
            d = drift_x[j, i]
            if d > 0.0:
                flux += fu[j, i - 1] * d
            elif d < 0.0:
                flux += fu[j, i] * d
            q = dt * flux / hx
            out[j, i - 1] -= q
            out[j, i] += q
    for j in range(1, ny):
        for i in range(nx):
            flux = -mob_y[j, i] * py[j, i] * (u[j, i] - u[j - 1, i]) / hy
            d = drift_y[j, i]
            if d > 0.0:
                flux += fu[j - 1, i] * d
            elif d < 0.0:
                flux += fu[j, i] * d
            q = dt * flux / hy
            out[j - 1, i] -= q
            out[j, i] += q


@njit(cache=True)
def apply_implicit(x, u, dt, hx, hy, out):
    """out = (I - dt*Lap + dt*diag(u)) x, Neumann five-point Laplacian."""
    ny, nx = x.shape
    cx = dt / (hx * hx)
    cy = dt / (hy * hy)
    for j in range(ny):
        for i in range(nx):
            xc = x[j, i]
            s = xc * (1.0 + dt * u[j, i])
            if i > 0:
                s += cx * (xc - x[j, i - 1])
            if i < nx - 1:
                s += cx * (xc - x[j, i + 1])
            if j > 0:
                s += cy * (xc - x[j - 1, i])
            if j < ny - 1:
                s += cy * (xc - x[j + 1, i])
            out[j, i] = s


@njit(cache=True)
def _apply_dot(x, u, dt, hx, hy, out):
    """out = (I - dt*Lap + dt*diag(u)) x; returns <x, out>."""
    ny, nx = x.shape
    cx = dt / (hx * hx)
    cy = dt / (hy * hy)
    acc = 0.0
    for j in range(ny):
        for i in range(nx):
            xc = x[j, i]
            s = xc * (1.0 + dt * u[j, i])
            if i > 0:
                s += cx * (xc - x[j, i - 1])
            if i < nx - 1:
                s += cx * (xc - x[j, i + 1])
            if j > 0:
                s += cy * (xc - x[j - 1, i])
            if j < ny - 1:
                s += cy * (xc - x[j + 1, i])
            out[j, i] = s
            acc += xc * s
    return acc


@njit(cache=True)
def cg_implicit(b, u, dt, hx, hy, x, tol, maxit):
    """Jacobi-preconditioned CG for the implicit nutrient step; x holds the
    initial guess and is overwritten. Returns (iterations, relative residual)."""
    ny, nx = b.shape
    cx = dt / (hx * hx)
    cy = dt / (hy * hy)
    dinv = np.empty_like(b)
    r = np.empty_like(b)
    z = np.empty_like(b)
    ap = np.empty_like(b)
    apply_implicit(x, u, dt, hx, hy, ap)
    bb = 0.0
    rr = 0.0
    rz = 0.0
    for j in range(ny):
        for i in range(nx):
            d = 1.0 + dt * u[j, i]
            if i > 0:
                d += cx
            if i < nx - 1:
                d += cx
            if j > 0:
                d += cy
            if j < ny - 1:
                d += cy
            dinv[j, i] = 1.0 / d
            rij = b[j, i] - ap[j, i]
            r[j, i] = rij
            z[j, i] = rij * dinv[j, i]
            bb += b[j, i] * b[j, i]
            rr += rij * rij
            rz += rij * z[j, i]
    bnorm = np.sqrt(bb) if bb > 0.0 else 1.0
    res = np.sqrt(rr) / bnorm
    if res <= tol:
        return 0, res
    p = z.copy()
    for it in range(1, maxit + 1):
        a = rz / _apply_dot(p, u, dt, hx, hy, ap)
        rr = 0.0
        rz_new = 0.0
        for j in range(ny):
            for i in range(nx):
                x[j, i] += a * p[j, i]
                rij = r[j, i] - a * ap[j, i]
                r[j, i] = rij
                zij = rij * dinv[j, i]
                z[j, i] = zij
                rr += rij * rij
                rz_new += rij * zij
        res = np.sqrt(rr) / bnorm
        if res <= tol:
            return it, res
        beta = rz_new / rz
        rz = rz_new
        for j in range(ny):
            for i in range(nx):
                p[j, i] = z[j, i] + beta * p[j, i]
    return -1, res


@njit(cache=True)
def grad6_density_sum(v, hx, hy):
    """sum over cells of |grad v|^6 / v^5 using face-averaged squared gradients."""
    ny, nx = v.shape
    s = 0.0
    for j in range(ny):
        for i in range(nx):
            g2 = 0.0
            if i > 0:
                g = (v[j, i] - v[j, i - 1]) / hx
                g2 += 0.5 * g * g
            if i < nx - 1:
                g = (v[j, i + 1] - v[j, i]) / hx
                g2 += 0.5 * g * g
            if j > 0:
                g = (v[j, i] - v[j - 1, i]) / hy
                g2 += 0.5 * g * g
            if j < ny - 1:
                g = (v[j + 1, i] - v[j, i]) / hy
                g2 += 0.5 * g * g
            vc = v[j, i]
            v2 = vc * vc
            s += g2 * g2 * g2 / (v2 * v2 * vc)
    return s
