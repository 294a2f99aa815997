"""Compiled fixed-step RK4 loops.

Parameter vectors are packed by the model classes:
swing  = [p_m, pe_minus, pe_plus, gamma, d_const, d_var, t_jeq, omega_n]
first  = [a, b, c, omega_n]

Status codes returned by the run loops: 0 horizon reached, 1 settled,
2 diverged (or pole slip for multi-machine runs), 3 non-finite state.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

HORIZON, SETTLED, DIVERGED, NONFINITE = 0, 1, 2, 3


@njit(cache=True)
def _swing_f(d, w, p):
    pe = p[1] * math.cos(d - p[3]) + p[2] * math.cos(d + p[3])
    damp = p[4] + p[5] * math.sin(p[3] - d)
    return p[7] * w, (p[0] - pe - damp * w) / p[6]


@njit(cache=True)
def _swing_step(d, w, p, h):
    a1, b1 = _swing_f(d, w, p)
    a2, b2 = _swing_f(d + 0.5 * h * a1, w + 0.5 * h * b1, p)
    a3, b3 = _swing_f(d + 0.5 * h * a2, w + 0.5 * h * b2, p)
    a4, b4 = _swing_f(d + h * a3, w + h * b3, p)
    return d + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4), w + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)


@njit(cache=True)
def _settle_update(d, w, settle, hold):
    # settle = [enabled, sep, tol_d, tol_w, hold_steps, div_limit]
    rel = d - settle[1]
    k = math.floor(rel / TWO_PI + 0.5)
    if abs(rel - TWO_PI * k) < settle[2] and abs(w) < settle[3]:
        hold += 1
    else:
        hold = 0
    return hold, abs(rel) > settle[5]


@njit(cache=True)
def swing_run(d, w, p, dt, n, stride, step0, out, n_out, settle, hold):
    """Advance ``n`` steps, recording every ``stride``-th global step into ``out``.

    Returns (delta, omega, steps_done, n_out, status, hold).
    """
    status = HORIZON
    i = 0
    while i < n:
        d, w = _swing_step(d, w, p, dt)
        i += 1
        if not (math.isfinite(d) and math.isfinite(w)):
            status = NONFINITE
            break
        if (step0 + i) % stride == 0:
            out[n_out, 0] = step0 + i
            out[n_out, 1] = d
            out[n_out, 2] = w
            n_out += 1
        if settle[0] > 0.0:
            hold, div = _settle_update(d, w, settle, hold)
            if div:
                status = DIVERGED
                break
            if hold >= settle[4]:
                status = SETTLED
                break
    return d, w, i, n_out, status, hold


@njit(cache=True)
def _first_f(d, p):
    return p[0] + p[1] * math.cos(d) + p[2] * math.sin(d)


@njit(cache=True)
def _first_step(d, p, h):
    a1 = _first_f(d, p)
    a2 = _first_f(d + 0.5 * h * a1, p)
    a3 = _first_f(d + 0.5 * h * a2, p)
    a4 = _first_f(d + h * a3, p)
    return d + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)


@njit(cache=True)
def first_order_run(d, p, dt, n, stride, step0, out, n_out, settle, hold):
    status = HORIZON
    i = 0
    while i < n:
        d = _first_step(d, p, dt)
        i += 1
        if not math.isfinite(d):
            status = NONFINITE
            break
        w = _first_f(d, p) / p[3]
        if (step0 + i) % stride == 0:
            out[n_out, 0] = step0 + i
            out[n_out, 1] = d
            out[n_out, 2] = w
            n_out += 1
        if settle[0] > 0.0:
            hold, div = _settle_update(d, w, settle, hold)
            if div:
                status = DIVERGED
                break
            if hold >= settle[4]:
                status = SETTLED
                break
    return d, i, n_out, status, hold


# --- multi-machine --------------------------------------------------------------


@njit(cache=True)
def multi_powers(delta, e, g, b):
    n = delta.shape[0]
    p = np.empty(n)
    for k in range(n):
        acc = 0.0
        for l in range(n):
            x = delta[k] - delta[l]
            acc += e[l] * (g[k, l] * math.cos(x) + b[k, l] * math.sin(x))
        p[k] = e[k] * acc
    return p


@njit(cache=True)
def _multi_f(y, m, e, g, b, pstar, tj, dgen, kinv, damped, wn, w0):
    ns = e.shape[0]
    delta = np.empty(ns)
    for i in range(m):
        delta[i] = y[i]
    for j in range(ns - m):
        delta[m + j] = y[2 * m + j]
    p = multi_powers(delta, e, g, b)
    dy = np.empty(y.shape[0])
    for i in range(m):
        dev = y[m + i] - w0
        dy[i] = wn * dev
        acc = pstar[i] - p[i]
        if damped:
            acc -= dgen[i] * dev
        dy[m + i] = acc / tj[i]
    for j in range(ns - m):
        dy[2 * m + j] = wn * kinv[j] * (pstar[m + j] - p[m + j])
    return dy


@njit(cache=True)
def multi_run(y, m, e, g, b, pstar, tj, dgen, kinv, damped, wn, w0, dt, n, stride, step0, out, n_out, slip_ref, slip_limit):
    """RK4 for the m-generator / n-inverter model.

    Stops with DIVERGED once any source angle, measured against source 0,
    departs from ``slip_ref`` by more than ``slip_limit`` (when positive).
    """
    status = HORIZON
    ns = e.shape[0]
    i = 0
    h = dt
    while i < n:
        k1 = _multi_f(y, m, e, g, b, pstar, tj, dgen, kinv, damped, wn, w0)
        k2 = _multi_f(y + 0.5 * h * k1, m, e, g, b, pstar, tj, dgen, kinv, damped, wn, w0)
        k3 = _multi_f(y + 0.5 * h * k2, m, e, g, b, pstar, tj, dgen, kinv, damped, wn, w0)
        k4 = _multi_f(y + h * k3, m, e, g, b, pstar, tj, dgen, kinv, damped, wn, w0)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        i += 1
        finite = True
        for v in y:
            if not math.isfinite(v):
                finite = False
        if not finite:
            status = NONFINITE
            break
        if (step0 + i) % stride == 0:
            out[n_out, 0] = step0 + i
            out[n_out, 1:] = y
            n_out += 1
        if slip_limit > 0.0:
            a0 = y[0]
            worst = 0.0
            for s in range(1, ns):
                a = y[s] if s < m else y[m + s]
                dev = abs(a - a0 - slip_ref[s])
                if dev > worst:
                    worst = dev
            if worst > slip_limit:
                status = DIVERGED
                break
    return y, i, n_out, status


# --- stability boundary --------------------------------------------------------

EXIT_LEFT, EXIT_RIGHT, EXIT_BOTTOM, EXIT_TOP, CLOSED, ARC_LIMIT, STEP_LIMIT, STALLED = range(8)


@njit(cache=True)
def trace_reverse(d, w, p, dt, max_steps, window, spacing, max_arc, uep_d, uep_w, close_tol, out):
    """Integrate the swing model backward in time from (d, w).

    Points are stored whenever the next step would push the spacing past
    ``spacing``.  Returns (n_points, reason, arc_length).
    """
    n = 0
    out[n, 0] = d
    out[n, 1] = w
    n += 1
    arc = 0.0
    acc = 0.0
    reason = STEP_LIMIT
    for _ in range(max_steps):
        d2, w2 = _swing_step(d, w, p, -dt)
        if not (math.isfinite(d2) and math.isfinite(w2)):
            reason = STALLED
            break
        ds = math.hypot(d2 - d, w2 - w)
        if acc + ds > spacing and n < out.shape[0]:
            out[n, 0] = d
            out[n, 1] = w
            n += 1
            acc = 0.0
        acc += ds
        arc += ds
        d, w = d2, w2
        if d < window[0]:
            reason = EXIT_LEFT
            break
        if d > window[1]:
            reason = EXIT_RIGHT
            break
        if w < window[2]:
            reason = EXIT_BOTTOM
            break
        if w > window[3]:
            reason = EXIT_TOP
            break
        if arc > 10.0 * close_tol and math.hypot(d - uep_d, w - uep_w) < close_tol:
            reason = CLOSED
            break
        if arc > max_arc:
            reason = ARC_LIMIT
            break
    if n < out.shape[0]:
        out[n, 0] = d
        out[n, 1] = w
        n += 1
    return n, reason, arc


@njit(cache=True)
def swing_membership(ds, ws, p, dt, max_steps, sep, capture_d, capture_w, div_limit):
    """Period index each initial state is captured into, or a sentinel.

    A state is captured once it lies within the small box around some
    ``sep + 2 pi k``; -9999 marks divergence and 9999 an undecided run.
    """
    out = np.empty(ds.shape[0], dtype=np.int64)
    for s in range(ds.shape[0]):
        d = ds[s]
        w = ws[s]
        code = 9999
        for _ in range(max_steps):
            rel = d - sep
            k = math.floor(rel / TWO_PI + 0.5)
            if abs(rel - TWO_PI * k) < capture_d and abs(w) < capture_w:
                code = k
                break
            if abs(rel) > div_limit or not math.isfinite(d):
                code = -9999
                break
            d, w = _swing_step(d, w, p, dt)
        out[s] = code
    return out
