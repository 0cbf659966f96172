"""Compiled inner loops.

Weights are passed as a flat parameter tuple (see :func:`weight_params`) and
evaluated on demand in log space, so no per-index table is ever built.  All
kernels consume pre-drawn uniforms: tick ``t`` (1-based) uses ``u[t-1]`` and
is red iff ``u < pi``.  Coarse step ``n`` consumes ``u[n*d : (n+1)*d]``,
which keeps the coarse chain aligned with the fine one draw for draw.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .weights import WeightSequence

_KIND_CODES = {"constant": 0, "polynomial": 1, "exponential": 2, "counterexample": 3, "table": 4}
_TAIL_CODES = {"repeat-last": 0, "extend-polynomial": 1, "extend-exponential": 2}


def weight_params(seq: WeightSequence) -> tuple:
    """(kind code, ln c, rho, ln rho, modulus, table logs, tail code)."""
    code = _KIND_CODES[seq.kind]
    log_c = math.log(seq.c) if seq.kind == "constant" else 0.0
    log_rho = math.log(seq.rho) if seq.rho > 0 else 0.0
    tlogs = np.log(np.asarray(seq.values, dtype=np.float64)) if seq.kind == "table" else np.zeros(1)
    return (code, log_c, float(seq.rho), log_rho, int(seq.d), tlogs, _TAIL_CODES.get(seq.tail, 0))


@njit(cache=True, nogil=True)
def log_w(p, k):
    code = p[0]
    if code == 0:
        return p[1]
    if code == 1:
        return p[2] * math.log1p(k)
    if code == 2:
        return k * p[3]
    if code == 3:
        if k % p[4] == 0:
            return 0.0
        return k * p[3]
    tlogs = p[5]
    n = tlogs.shape[0]
    if k < n:
        return tlogs[k]
    if p[6] == 0:
        return tlogs[n - 1]
    if p[6] == 1:
        return p[2] * math.log1p(k)
    return k * p[3]


@njit(cache=True, nogil=True)
def pi_from_logs(lr, lg):
    x = lg - lr
    if x > 0.0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


@njit(cache=True, nogil=True)
def fine_path_kernel(p, d, u, r0, g0, sr0, sg0, t0, colours):
    """Advance a fine path ``len(u)`` ticks from tick ``t0``; fill ``colours`` (1 red, 0 green).

    ``(sr0, sg0)`` is the snapshot in force for tick ``t0 + 1`` when that tick
    is not a block start.  Returns the final (r, g, sr, sg).
    """
    r, g, sr, sg = r0, g0, sr0, sg0
    pi = pi_from_logs(log_w(p, sr), log_w(p, sg))
    for i in range(u.shape[0]):
        t = t0 + i + 1
        if (t - 1) % d == 0:
            sr, sg = r, g
            pi = pi_from_logs(log_w(p, sr), log_w(p, sg))
        if u[i] < pi:
            colours[i] = 1
            r += 1
        else:
            colours[i] = 0
            g += 1
    return r, g, sr, sg


@njit(cache=True, nogil=True)
def coarse_path_kernel(p, d, u, r0, g0, rs, gs):
    """Run ``len(rs)`` coarse steps from (r0, g0) using ``d`` uniforms per step."""
    r, g = r0, g0
    for n in range(rs.shape[0]):
        pi = pi_from_logs(log_w(p, r), log_w(p, g))
        a = 0
        for j in range(d):
            if u[n * d + j] < pi:
                a += 1
        r += a
        g += d - a
        rs[n] = r
        gs[n] = g
    return r, g


@njit(cache=True, nogil=True)
def streaming_kernel(p, d, u, state):
    """Fine simulation keeping only running statistics.

    ``state`` is a float64 array updated in place:
    ``[r, g, sr, sg, t, N, last_colour, run_start]`` where ``last_colour`` is
    -1 before the first tick and ``run_start`` is the first tick of the
    current monochromatic run.
    """
    r = np.int64(state[0])
    g = np.int64(state[1])
    sr = np.int64(state[2])
    sg = np.int64(state[3])
    t0 = np.int64(state[4])
    nval = state[5]
    last = np.int64(state[6])
    run_start = np.int64(state[7])
    pi = pi_from_logs(log_w(p, sr), log_w(p, sg))
    for i in range(u.shape[0]):
        t = t0 + i + 1
        if (t - 1) % d == 0:
            sr, sg = r, g
            pi = pi_from_logs(log_w(p, sr), log_w(p, sg))
        if u[i] < pi:
            c = 1
            nval += math.exp(-log_w(p, r))
            r += 1
        else:
            c = 0
            nval -= math.exp(-log_w(p, g))
            g += 1
        if c != last:
            last = c
            run_start = t
    state[0] = r
    state[1] = g
    state[2] = sr
    state[3] = sg
    state[4] = t0 + u.shape[0]
    state[5] = nval
    state[6] = last
    state[7] = run_start
