"""Compiled inner loops for sampling and stochastic proximal updates.

Codes are stored word-major (``At`` has shape ``(V, M)``) so that a word's
code vector is contiguous. Every kernel touching ``D``/``At`` releases the
GIL; callers guarantee that concurrently processed entries share no row of
``D`` and no row of ``At``.
"""
import numpy as np
from numba import njit

NORM_EPS = 1e-15


@njit(cache=True)
def build_alias(weights):
    n = weights.shape[0]
    total = 0.0
    for i in range(n):
        total += weights[i]
    prob = np.empty(n)
    alias = np.arange(n)
    scaled = np.empty(n)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        scaled[i] = weights[i] * n / total
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    # leftovers are 1 up to rounding
    for k in range(nl):
        prob[large[k]] = 1.0
    for k in range(ns):
        prob[small[k]] = 1.0
    return prob, alias


@njit(cache=True, nogil=True)
def alias_draw(prob, alias, u_index, u_toss):
    n = prob.shape[0]
    i = int(u_index * n)
    if i >= n:
        i = n - 1
    if u_toss < prob[i]:
        return i
    return alias[i]


@njit(cache=True, nogil=True)
def draw_batch(prob, alias, rows, cols, uniforms, batch_size, row_mark, col_mark, stamp, out):
    """Fill ``out`` with up to ``batch_size`` entries sharing no row or column.

    ``uniforms`` has shape ``(budget, 2)``; each draw consumes one row, and
    conflicting draws are rejected. Returns the number of entries kept.
    """
    n = 0
    for k in range(uniforms.shape[0]):
        if n >= batch_size:
            break
        e = alias_draw(prob, alias, uniforms[k, 0], uniforms[k, 1])
        c = rows[e]
        v = cols[e]
        if row_mark[c] == stamp or col_mark[v] == stamp:
            continue
        row_mark[c] = stamp
        col_mark[v] = stamp
        out[n] = e
        n += 1
    return n


@njit(cache=True, nogil=True)
def group_prox_inplace(a, ptr, members, t):
    for g in range(ptr.shape[0] - 1):
        lo = ptr[g]
        hi = ptr[g + 1]
        if hi - lo == 1:
            i = members[lo]
            x = a[i]
            ax = abs(x)
            if ax <= t or ax < NORM_EPS:
                a[i] = 0.0
            elif x > 0:
                a[i] = ax - t
            else:
                a[i] = -(ax - t)
            continue
        ss = 0.0
        for k in range(lo, hi):
            ss += a[members[k]] * a[members[k]]
        r = np.sqrt(ss)
        if r <= t or r < NORM_EPS:
            for k in range(lo, hi):
                a[members[k]] = 0.0
        else:
            f = 1.0 - t / r
            for k in range(lo, hi):
                a[members[k]] = a[members[k]] * f


@njit(cache=True, nogil=True)
def l1_prox_inplace(a, t):
    for i in range(a.shape[0]):
        x = a[i]
        ax = abs(x)
        if ax <= t or ax < NORM_EPS:
            a[i] = 0.0
        elif x > 0:
            a[i] = ax - t
        else:
            a[i] = -(ax - t)


@njit(cache=True, nogil=True)
def update_entry(D, At, c, v, x, scale, step, tau, thr, ptr, members, use_l1):
    """One stochastic proximal step on row ``D[c]`` and code ``At[v]``.

    Both gradient steps use pre-update values. Returns False if the
    result is not finite.
    """
    M = D.shape[1]
    pred = 0.0
    for m in range(M):
        pred += D[c, m] * At[v, m]
    r = x - pred
    g = 2.0 * step
    sr = scale * r
    ok = True
    for m in range(M):
        d_old = D[c, m]
        a_old = At[v, m]
        D[c, m] = d_old + g * (a_old * sr - tau * d_old)
        At[v, m] = a_old + g * (d_old * sr)
    if use_l1:
        l1_prox_inplace(At[v], thr)
    else:
        group_prox_inplace(At[v], ptr, members, thr)
    for m in range(M):
        if not (np.isfinite(D[c, m]) and np.isfinite(At[v, m])):
            ok = False
    return ok


@njit(cache=True, nogil=True)
def apply_entries(D, At, batch, lo, hi, rows, cols, values, scales, step, tau, thr, ptr, members, use_l1):
    bad = 0
    for k in range(lo, hi):
        e = batch[k]
        if not update_entry(D, At, rows[e], cols[e], values[e], scales[e], step, tau, thr,
                            ptr, members, use_l1):
            bad += 1
    return bad


@njit(cache=True, nogil=True)
def run_chunk(D, At, prob, alias, rows, cols, values, scales, uniforms, batch_size,
              row_mark, col_mark, stamp0, t0, T, eta0, tau, lam, scaled_thr,
              ptr, members, use_l1, batches):
    """Serial training over ``uniforms.shape[0]`` consecutive batches.

    ``batches`` (shape ``(n_batches, batch_size)``) receives the sampled
    entry ids, padded with -1. Returns the number of non-finite updates.
    """
    nb = uniforms.shape[0]
    buf = np.empty(batch_size, dtype=np.int64)
    bad = 0
    for b in range(nb):
        n = draw_batch(prob, alias, rows, cols, uniforms[b], batch_size, row_mark, col_mark,
                       stamp0 + b, buf)
        for k in range(batch_size):
            batches[b, k] = buf[k] if k < n else -1
        step = eta0 / (1.0 + (t0 + b) / T)
        thr = step * lam if scaled_thr else lam
        bad += apply_entries(D, At, buf, 0, n, rows, cols, values, scales, step, tau, thr,
                             ptr, members, use_l1)
        if bad:
            break
    return bad


@njit(cache=True)
def squared_loss(D, At, rows, cols, values):
    total = 0.0
    M = D.shape[1]
    for e in range(values.shape[0]):
        c = rows[e]
        v = cols[e]
        p = 0.0
        for m in range(M):
            p += D[c, m] * At[v, m]
        r = values[e] - p
        total += r * r
    return total
