"""Compiled inner loop of the thinning simulator."""

import math

import numpy as np
from numba import njit

DONE = 0
NEED_UNIFORMS = 1
NEED_SPACE = 2
DIVERGED = 3
BOUND_VIOLATED = 4


@njit(cache=True)
def spline_value(knots, coef, order, dim, lo, hi, x):
    if x < lo or x > hi:
        return 0.0
    k = order - 1
    while k < dim - 1 and knots[k + 1] <= x:
        k += 1
    deg = order - 1
    d = np.empty(order)
    for r in range(order):
        d[r] = coef[k - deg + r]
    for r in range(1, deg + 1):
        for i in range(deg, r - 1, -1):
            left = knots[i + k - deg]
            denom = knots[i + 1 + k - r] - left
            a = (x - left) / denom if denom > 0.0 else 0.0
            d[i] = (1.0 - a) * d[i - 1] + a * d[i]
    return d[deg]


@njit(cache=True)
def background_value(j, t, bg_kind, bg_par, bg_knots, bg_coef, bg_order, bg_dim):
    if bg_kind[j] == 0:
        return bg_par[j, 0] + bg_par[j, 1] * math.sin(bg_par[j, 2] * t)
    return spline_value(bg_knots[j], bg_coef[j], bg_order[j], bg_dim[j],
                        0.0, bg_par[j, 0], t)


@njit(cache=True)
def edge_value(e, lag, e_kind, e_par, e_b, e_knots, e_coef, e_order, e_dim):
    if lag < 0.0 or lag > e_b[e]:
        return 0.0
    if e_kind[e] == 0:
        return e_par[e, 0] * (lag + e_par[e, 1]) * math.exp(1.0 - e_par[e, 2] * lag)
    return spline_value(e_knots[e], e_coef[e], e_order[e], e_dim[e], 0.0, e_b[e], lag)


@njit(cache=True)
def intensities(t, lo, n, ev_t, ev_k, psi,
                bg_kind, bg_par, bg_knots, bg_coef, bg_order, bg_dim,
                src_ptr, e_tgt, e_kind, e_par, e_b, e_knots, e_coef, e_order, e_dim):
    p = psi.shape[0]
    for j in range(p):
        psi[j] = background_value(j, t, bg_kind, bg_par, bg_knots, bg_coef, bg_order, bg_dim)
    for i in range(lo, n):
        lag = t - ev_t[i]
        k = ev_k[i]
        # gamma edges from one source usually share (shift, rate); reuse the shape
        a_prev = -1.0
        r_prev = -1.0
        shape = 0.0
        for e in range(src_ptr[k], src_ptr[k + 1]):
            if lag > e_b[e]:
                continue
            if e_kind[e] == 0:
                a = e_par[e, 1]
                r = e_par[e, 2]
                if a != a_prev or r != r_prev:
                    shape = (lag + a) * math.exp(1.0 - r * lag)
                    a_prev = a
                    r_prev = r
                psi[e_tgt[e]] += e_par[e, 0] * shape
            else:
                psi[e_tgt[e]] += edge_value(e, lag, e_kind, e_par, e_b, e_knots,
                                            e_coef, e_order, e_dim)


@njit(cache=True)
def thin(t, T, n, lo, ev_t, ev_k, U, upos, delta, env, bmax, excit_bound, max_rate,
         bg_kind, bg_par, bg_knots, bg_coef, bg_order, bg_dim,
         src_ptr, e_tgt, e_kind, e_par, e_b, e_knots, e_coef, e_order, e_dim):
    """Run modified thinning from state ``(t, n, lo)`` until done or a resource runs out.

    Returns ``(status, t, n, lo, upos, rate)``; ``rate`` is the last dominating
    rate (or the offending intensity on a bound violation).
    """
    p = excit_bound.shape[0]
    psi = np.empty(p)
    ncell = env.shape[0]
    cap = ev_t.shape[0]
    M = 0.0
    while True:
        if t >= T:
            return DONE, t, n, lo, upos, M
        cell = int(t / delta)
        if cell >= ncell:
            cell = ncell - 1
        cell_end = min((cell + 1) * delta, T)
        if cell_end <= t:
            cell += 1
            if cell >= ncell:
                return DONE, T, n, lo, upos, M
            cell_end = min((cell + 1) * delta, T)
        while lo < n and t - ev_t[lo] > bmax:
            lo += 1
        M = env[cell]
        for i in range(lo, n):
            M += excit_bound[ev_k[i]]
        if M > max_rate:
            return DIVERGED, t, n, lo, upos, M
        if M <= 0.0:
            t = cell_end
            continue
        if n >= cap:
            return NEED_SPACE, t, n, lo, upos, M
        if upos + 2 > U.shape[0]:
            return NEED_UNIFORMS, t, n, lo, upos, M
        w = -math.log(1.0 - U[upos]) / M
        upos += 1
        tn = t + w
        if tn >= cell_end:
            t = cell_end
            continue
        t = tn
        intensities(t, lo, n, ev_t, ev_k, psi, bg_kind, bg_par, bg_knots, bg_coef,
                    bg_order, bg_dim, src_ptr, e_tgt, e_kind, e_par, e_b, e_knots,
                    e_coef, e_order, e_dim)
        total = 0.0
        for j in range(p):
            if psi[j] > 0.0:
                total += psi[j]
        if total > M * (1.0 + 1e-9) + 1e-12:
            return BOUND_VIOLATED, t, n, lo, upos, total
        D = U[upos] * M
        upos += 1
        if D < total:
            acc = 0.0
            pick = -1
            for j in range(p):
                if psi[j] > 0.0:
                    pick = j
                    acc += psi[j]
                    if D < acc:
                        break
            ev_t[n] = t
            ev_k[n] = pick
            n += 1
