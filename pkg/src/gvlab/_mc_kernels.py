"""Compiled path kernels.

Every path draws its randomness from a SplitMix64 stream keyed on
(seed, path_index, salt), so results never depend on how paths are
split across workers.  Brownian increments have variance 2 dt, matching
a generator written without the customary factor 1/2.
"""

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
TWO_PI = 2.0 * math.pi

KIND_BMDRIFT = 0
KIND_BESSEL = 1
KIND_TABULATED = 2

SALT_GV = 1
SALT_ETA = 2
SALT_X = 3
SALT_FK = 4


@njit(cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def path_state(seed, index, salt):
    s = _mix(np.uint64(seed) + _GOLDEN * np.uint64(salt))
    return _mix(s ^ _mix(np.uint64(index) * _GOLDEN + _GOLDEN))


@njit(cache=True, nogil=True)
def next_uniform(state):
    state = state + _GOLDEN
    z = _mix(state)
    # 53-bit uniform in (0, 1)
    u = (float(z >> _S11) + 0.5) * _INV53
    return state, u


@njit(cache=True, nogil=True)
def next_normal(state, has_spare, spare):
    """Standard normal by the polar method, returning the second variate on the next call."""
    if has_spare:
        return state, False, 0.0, spare
    while True:
        state, u1 = next_uniform(state)
        state, u2 = next_uniform(state)
        u = 2.0 * u1 - 1.0
        v = 2.0 * u2 - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return state, True, v * f, u * f


@njit(cache=True, nogil=True, inline="always")
def ipow(z, k):
    """z**k for integer k (float-valued) by repeated squaring."""
    n = int(k)
    if n < 0:
        z = 1.0 / z
        n = -n
    out = 1.0 + 0.0j
    while n:
        if n & 1:
            out *= z
        z *= z
        n >>= 1
    return out


@njit(cache=True, nogil=True, inline="always")
def coef(kind, p0, p1, ty, ta, tb, y):
    if kind == KIND_BMDRIFT:
        return p0, -2.0 * p1
    if kind == KIND_BESSEL:
        return 1.0, p0 / y
    return np.interp(y, ty, ta), np.interp(y, ty, tb)


@njit(cache=True, nogil=True, inline="always")
def advance(kind, p0, p1, ty, ta, tb, eta, delta, a, b, noise):
    """One step of eta; the drift is averaged over a predictor (Heun), the noise is left-point."""
    pred = eta + b * delta + a * noise
    if kind == KIND_BMDRIFT or pred <= 0.0:
        return pred, b
    _, b2 = coef(kind, p0, p1, ty, ta, tb, pred)
    bm = 0.5 * (b + b2)
    return eta + bm * delta + a * noise, bm


@njit(cache=True, nogil=True)
def step_size(eta, dt, y_fine):
    r = eta / y_fine
    return dt * r * r if r > 1.0 else dt


@njit(cache=True, nogil=True, inline="always")
def potential_at(dim, vgrid, n, x0, x1):
    h = TWO_PI / n
    u = (x0 % TWO_PI) / h
    i0 = int(u)
    f0 = u - i0
    i0 = i0 % n
    i1 = (i0 + 1) % n
    if dim == 1:
        return (1.0 - f0) * vgrid[i0, 0] + f0 * vgrid[i1, 0]
    w = (x1 % TWO_PI) / h
    j0 = int(w)
    g0 = w - j0
    j0 = j0 % n
    j1 = (j0 + 1) % n
    return ((1.0 - f0) * ((1.0 - g0) * vgrid[i0, j0] + g0 * vgrid[i0, j1])
            + f0 * ((1.0 - g0) * vgrid[i1, j0] + g0 * vgrid[i1, j1]))


@njit(cache=True, nogil=True)
def _wrap(x):
    # increments are far smaller than 2 pi, so a single shift almost always suffices
    if 0.0 <= x < TWO_PI:
        return x
    if -TWO_PI <= x < 0.0:
        return x + TWO_PI
    if TWO_PI <= x < 2.0 * TWO_PI:
        return x - TWO_PI
    return x % TWO_PI


@njit(cache=True, nogil=True)
def bin_of(dim, n_bins, x0, x1):
    b0 = int((x0 % TWO_PI) / TWO_PI * n_bins)
    if b0 >= n_bins:
        b0 = n_bins - 1
    if dim == 1:
        return b0
    b1 = int((x1 % TWO_PI) / TWO_PI * n_bins)
    if b1 >= n_bins:
        b1 = n_bins - 1
    return b0 * n_bins + b1


@njit(cache=True, nogil=True, inline="always")
def _hermite(t, h, p0, m0, p1, m1):
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * h * m0
            + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * h * m1)


@njit(cache=True, nogil=True)
def _locate(ynodes, log_lo, log_step, eta):
    ny = ynodes.shape[0]
    if eta <= ynodes[0]:
        return 0
    m = int((math.log(eta) - log_lo) / log_step)
    return min(max(m, 0), ny - 2)


@njit(cache=True, nogil=True)
def _crossing(state, eta, eta_new, a, delta):
    """Decide absorption over one step; returns (state, absorbed, theta)."""
    if eta_new <= 0.0:
        return state, True, eta / (eta - eta_new)
    expo = eta * eta_new / (a * a * delta)
    if expo < 40.0:
        state, u = next_uniform(state)
        if u < math.exp(-expo):
            return state, True, eta / (eta + eta_new)
    return state, False, 1.0


@njit(cache=True, nogil=True)
def gv_paths(start, stop, seed, dim, kind, p0, p1, ty, ta, tb,
             dt, y0, y_fine, max_steps, axis_i, axis_j,
             has_v, vgrid, nv, kx, ky, ynodes, log_lo, log_step, atab, a1tab, a2tab,
             n_bins, out_bin, out_w, out_t, out_s, out_flag):
    sq2 = math.sqrt(2.0)
    ny = ynodes.shape[0]
    y_top = ynodes[ny - 1]
    nq = kx.shape[0]
    for p in range(start, stop):
        st = path_state(seed, p, SALT_GV)
        hs = False
        sp = 0.0
        st, u = next_uniform(st)
        x0 = TWO_PI * u
        x1 = 0.0
        if dim == 2:
            st, u = next_uniform(st)
            x1 = TWO_PI * u
        eta = y0
        m = _locate(ynodes, log_lo, log_step, eta)
        jw = 0.0 + 0.0j
        jt = 0.0 + 0.0j
        js = 0.0 + 0.0j
        done = False
        steps = 0
        while steps < max_steps:
            steps += 1
            delta = step_size(eta, dt, y_fine)
            sd = sq2 * math.sqrt(delta)
            st, hs, sp, n0 = next_normal(st, hs, sp)
            st, hs, sp, n1 = next_normal(st, hs, sp)
            db = sd * n0
            dx0 = sd * n1
            dx1 = 0.0
            if dim == 2:
                st, hs, sp, n2 = next_normal(st, hs, sp)
                dx1 = sd * n2
            a, b = coef(kind, p0, p1, ty, ta, tb, eta)

            # gradient of the harmonic extension at (x, eta)
            du_dy = 0.0 + 0.0j
            du_dxi = 0.0 + 0.0j
            if nq > 0:
                z0 = complex(math.cos(x0), math.sin(x0))
                z1 = complex(math.cos(x1), math.sin(x1)) if dim == 2 else 1.0 + 0.0j
                top = eta >= y_top
                if not top:
                    while m > 0 and eta < ynodes[m]:
                        m -= 1
                    while m < ny - 2 and eta >= ynodes[m + 1]:
                        m += 1
                h = ynodes[m + 1] - ynodes[m]
                t = (eta - ynodes[m]) / h
                if t < 0.0:
                    t = 0.0
                for q in range(nq):
                    e = ipow(z0, kx[q])
                    if dim == 2:
                        e *= ipow(z1, ky[q])
                    kk = kx[q] if axis_i == 0 else ky[q]
                    if top:
                        du_dxi += 1j * kk * atab[q, ny - 1] * e
                        continue
                    av = _hermite(t, h, atab[q, m], a1tab[q, m], atab[q, m + 1], a1tab[q, m + 1])
                    a1v = _hermite(t, h, a1tab[q, m], a2tab[q, m], a1tab[q, m + 1], a2tab[q, m + 1])
                    du_dy += a1v * e
                    du_dxi += 1j * kk * av * e

            eta_new, b = advance(kind, p0, p1, ty, ta, tb, eta, delta, a, b, db)
            st, absorbed, theta = _crossing(st, eta, eta_new, a, delta)
            if absorbed:
                # the path ends exactly at 0; the independent x increments
                # only cover the fraction theta of the step
                delta *= theta
                db = (-eta - b * delta) / a
                rt = math.sqrt(theta)
                dx0 *= rt
                dx1 *= rt
            dbj = dx0 if axis_j == 0 else dx1
            if has_v:
                decay = math.exp(potential_at(dim, vgrid, nv, x0, x1) * delta)
                jw = decay * (jw + du_dy * a * db)
                jt = decay * (jt + du_dxi * db)
                js = decay * (js + du_dxi * dbj)
            else:
                jw += du_dy * a * db
                jt += du_dxi * db
                js += du_dxi * dbj
            x0 = _wrap(x0 + dx0)
            x1 = _wrap(x1 + dx1)
            eta = eta_new
            if absorbed:
                done = True
                break
        out_flag[p - start] = not done
        out_bin[p - start] = bin_of(dim, n_bins, x0, x1)
        out_w[p - start] = 0.5 * jw
        out_t[p - start] = 0.5 * jt
        out_s[p - start] = 0.5 * js


@njit(cache=True, nogil=True)
def eta_paths(start, stop, seed, kind, p0, p1, ty, ta, tb, dt, y0, y_fine, max_steps,
              g_grid, g_vals, use_g, out_tau, out_occ, out_flag):
    """Hitting times and occupation integrals of g (trapezoid rule in time)."""
    sq2 = math.sqrt(2.0)
    g_end = g_grid[g_grid.shape[0] - 1]
    for p in range(start, stop):
        st = path_state(seed, p, SALT_ETA)
        hs = False
        sp = 0.0
        eta = y0
        g_old = 0.0
        if use_g:
            g_old = np.interp(eta, g_grid, g_vals) if eta <= g_end else 0.0
        t = 0.0
        occ = 0.0
        done = False
        steps = 0
        while steps < max_steps:
            steps += 1
            delta = step_size(eta, dt, y_fine)
            st, hs, sp, n0 = next_normal(st, hs, sp)
            a, b = coef(kind, p0, p1, ty, ta, tb, eta)
            eta_new, b = advance(kind, p0, p1, ty, ta, tb, eta, delta, a, b, sq2 * math.sqrt(delta) * n0)
            st, absorbed, theta = _crossing(st, eta, eta_new, a, delta)
            if absorbed:
                delta *= theta
                eta_new = 0.0
            if use_g:
                g_new = np.interp(eta_new, g_grid, g_vals) if eta_new <= g_end else 0.0
                occ += 0.5 * (g_old + g_new) * delta
                g_old = g_new
            t += delta
            eta = eta_new
            if absorbed:
                done = True
                break
        out_tau[p - start] = t
        out_occ[p - start] = occ
        out_flag[p - start] = not done


@njit(cache=True, nogil=True)
def eta_record(seed, index, kind, p0, p1, ty, ta, tb, dt, y0, y_fine, max_steps, out_t, out_eta):
    """Single path of eta with the same stream as ``eta_paths``; returns (n_points, tau, absorbed)."""
    sq2 = math.sqrt(2.0)
    st = path_state(seed, index, SALT_ETA)
    hs = False
    sp = 0.0
    eta = y0
    t = 0.0
    out_t[0] = 0.0
    out_eta[0] = eta
    k = 1
    while k <= max_steps:
        delta = step_size(eta, dt, y_fine)
        st, hs, sp, n0 = next_normal(st, hs, sp)
        a, b = coef(kind, p0, p1, ty, ta, tb, eta)
        eta_new, b = advance(kind, p0, p1, ty, ta, tb, eta, delta, a, b, sq2 * math.sqrt(delta) * n0)
        st, absorbed, theta = _crossing(st, eta, eta_new, a, delta)
        if absorbed:
            t += theta * delta
            out_t[k] = t
            out_eta[k] = 0.0
            return k + 1, t, True
        t += delta
        eta = eta_new
        out_t[k] = t
        out_eta[k] = eta
        k += 1
    return k, t, False


@njit(cache=True, nogil=True)
def x_record(seed, index, dim, dt, n_steps, out_x):
    """Unwrapped torus Brownian path started uniformly; rows are time points."""
    sd = math.sqrt(2.0 * dt)
    st = path_state(seed, index, SALT_X)
    hs = False
    sp = 0.0
    for d in range(dim):
        st, u = next_uniform(st)
        out_x[0, d] = TWO_PI * u
    for k in range(1, n_steps + 1):
        for d in range(dim):
            st, hs, sp, z = next_normal(st, hs, sp)
            out_x[k, d] = out_x[k - 1, d] + sd * z


@njit(cache=True, nogil=True)
def fk_paths(start, stop, seed, dim, dt, n_steps, last_dt, vgrid, nv, kx, ky, fc,
             n_bins, out_val, out_weight):
    """exp(sum V(X) ds) f(X_t) with X started on bin left edges (path p -> bin p mod n_bins^dim)."""
    nb_total = n_bins ** dim
    for p in range(start, stop):
        st = path_state(seed, p, SALT_FK)
        hs = False
        sp = 0.0
        b = p % nb_total
        if dim == 1:
            x0 = TWO_PI * b / n_bins
            x1 = 0.0
        else:
            x0 = TWO_PI * (b // n_bins) / n_bins
            x1 = TWO_PI * (b % n_bins) / n_bins
        logw = 0.0
        for k in range(n_steps):
            h = dt if k < n_steps - 1 else last_dt
            sd = math.sqrt(2.0 * h)
            logw += potential_at(dim, vgrid, nv, x0, x1) * h
            st, hs, sp, z0 = next_normal(st, hs, sp)
            x0 += sd * z0
            if dim == 2:
                st, hs, sp, z1 = next_normal(st, hs, sp)
                x1 += sd * z1
        val = 0.0 + 0.0j
        for q in range(kx.shape[0]):
            ph = kx[q] * x0 + (ky[q] * x1 if dim == 2 else 0.0)
            val += fc[q] * complex(math.cos(ph), math.sin(ph))
        w = math.exp(logw)
        out_weight[p - start] = w
        out_val[p - start] = w * val
