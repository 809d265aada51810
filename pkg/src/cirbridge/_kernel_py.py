"""Pure-numpy fallback for the stepping kernel.

Implements the identical counter-based draw protocol as the compiled core
(see _kernel.pyx, whose docstring specifies the protocol); the two modules
must be kept in lockstep op for op.  Rejection loops are vectorized as masked
sweeps over the paths that are still pending, each path consuming pairs from
its own cursor, so the draw sequence per (path, step) matches the scalar
kernel exactly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

NAME = "python"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SHIFT11 = np.uint64(11)
_POISSON_SWITCH = 10.0
_HALF_LN_2PI = 0.9189385332046727
_INV_2_53 = 1.0 / 9007199254740992.0

_LOG_FACT = np.zeros(1024)
for _i in range(1, 1024):
    _LOG_FACT[_i] = _LOG_FACT[_i - 1] + math.log(float(_i))


def _philox(c0, c1, c2, c3, k0: int, k1: int):
    for _ in range(10):
        p0 = _M0 * c0.astype(np.uint64)
        p1 = _M1 * c2.astype(np.uint64)
        hi0 = (p0 >> _SHIFT32).astype(np.uint32)
        lo0 = (p0 & _MASK32).astype(np.uint32)
        hi1 = (p1 >> _SHIFT32).astype(np.uint32)
        lo1 = (p1 & _MASK32).astype(np.uint32)
        c0 = hi1 ^ c1 ^ np.uint32(k0)
        c1 = lo1
        c2 = hi0 ^ c3 ^ np.uint32(k1)
        c3 = lo0
        k0 = (k0 + 0x9E3779B9) & 0xFFFFFFFF
        k1 = (k1 + 0xBB67AE85) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _pair(seed: int, paths, step: int, process: int, pair_idx):
    n = paths.shape[0]
    c1 = np.full(n, step, dtype=np.uint32)
    c3 = np.full(n, process, dtype=np.uint32)
    w0, w1, w2, w3 = _philox(
        pair_idx.astype(np.uint32), c1, paths.astype(np.uint32), c3,
        seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF,
    )
    x1 = (w0.astype(np.uint64) << _SHIFT32) | w1.astype(np.uint64)
    x2 = (w2.astype(np.uint64) << _SHIFT32) | w3.astype(np.uint64)
    u1 = ((x1 >> _SHIFT11).astype(np.float64) + 0.5) * _INV_2_53
    u2 = ((x2 >> _SHIFT11).astype(np.float64) + 0.5) * _INV_2_53
    return u1, u2


def _log_factorial_vec(k):
    out = np.empty(k.shape, dtype=np.float64)
    small = k < 1024
    out[small] = _LOG_FACT[k[small]]
    if np.any(~small):
        z = k[~small].astype(np.float64) + 1.0
        z3 = z * z * z
        z5 = z3 * z * z
        out[~small] = (
            (z - 0.5) * np.log(z) - z + _HALF_LN_2PI
            + 1.0 / (12.0 * z) - 1.0 / (360.0 * z3) + 1.0 / (1260.0 * z5)
        )
    return out


def _poisson_vec(mu, seed, paths, step, process, cursor):
    """Poisson(mu) per path; returns (counts, advanced cursor)."""
    counts = np.zeros(mu.shape[0], dtype=np.int64)
    cursor = cursor.copy()
    small = mu < _POISSON_SWITCH

    if np.any(small):
        idx = np.nonzero(small)[0]
        u1, _ = _pair(seed, paths[idx], step, process, cursor[idx])
        cursor[idx] += np.uint32(1)
        m = mu[idx]
        t = np.exp(-m)
        s = t.copy()
        k = np.zeros(idx.size, dtype=np.int64)
        pending = u1 > s
        while np.any(pending):
            k[pending] += 1
            t[pending] *= m[pending] / k[pending]
            s[pending] += t[pending]
            pending &= u1 > s
            pending &= k < 1024
        counts[idx] = k

    if np.any(~small):
        idx = np.nonzero(~small)[0]
        m = mu[idx]
        b = 0.931 + 2.53 * np.sqrt(m)
        a = -0.059 + 0.02483 * b
        inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
        v_r = 0.9277 - 3.6224 / (b - 2.0)
        k = np.zeros(idx.size, dtype=np.int64)
        pending = np.ones(idx.size, dtype=bool)
        while np.any(pending):
            sub = np.nonzero(pending)[0]
            gidx = idx[sub]
            u1, u2 = _pair(seed, paths[gidx], step, process, cursor[gidx])
            cursor[gidx] += np.uint32(1)
            U = u1 - 0.5
            V = u2
            us = 0.5 - np.abs(U)
            kk = np.floor((2.0 * a[sub] / us + b[sub]) * U + m[sub] + 0.43).astype(np.int64)
            acc = (us >= 0.07) & (V <= v_r[sub])
            rej = (kk < 0) | ((us < 0.013) & (V > us))
            rest = ~(acc | rej)
            if np.any(rest):
                lhs = np.log(V[rest] * inv_alpha[sub][rest]
                             / (a[sub][rest] / (us[rest] * us[rest]) + b[sub][rest]))
                rhs = (kk[rest] * np.log(m[sub][rest]) - m[sub][rest]
                       - _log_factorial_vec(kk[rest]))
                acc[rest] = lhs <= rhs
            k[sub[acc]] = kk[acc]
            pending[sub[acc]] = False
        counts[idx] = k

    return counts, cursor


def _std_gamma_vec(shape, seed, paths, step, process, cursor):
    """Gamma(shape, 1) per path; returns (samples, advanced cursor)."""
    cursor = cursor.copy()
    boost = shape < 1.0
    sh = np.where(boost, shape + 1.0, shape)
    d = sh - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    g = np.empty(shape.shape[0], dtype=np.float64)
    pending = np.ones(shape.shape[0], dtype=bool)
    while np.any(pending):
        sub = np.nonzero(pending)[0]
        u1, u2 = _pair(seed, paths[sub], step, process, cursor[sub])
        cursor[sub] += np.uint32(1)
        z = ndtri(u1)
        t = 1.0 + c[sub] * z
        ok = t > 0.0
        v = t * t * t
        z2 = z * z
        acc = ok & (u2 < 1.0 - 0.0331 * z2 * z2)
        rest = ok & ~acc
        if np.any(rest):
            acc[rest] = np.log(u2[rest]) < (
                0.5 * z2[rest] + d[sub][rest] * (1.0 - v[rest] + np.log(v[rest]))
            )
        g[sub[acc]] = d[sub[acc]] * v[acc]
        pending[sub[acc]] = False
    if np.any(boost):
        idx = np.nonzero(boost)[0]
        u1, _ = _pair(seed, paths[idx], step, process, cursor[idx])
        cursor[idx] += np.uint32(1)
        g[idx] *= np.exp(np.log(u1) / shape[idx])
    return g, cursor


def _cir_step_vec(x, lam_half_factor, two_c, nu_half, seed, step, process, path_idx):
    n = x.shape[0]
    cursor = np.zeros(n, dtype=np.uint32)
    lam_half = x * lam_half_factor
    nvals = np.zeros(n, dtype=np.int64)
    pos = lam_half > 0.0
    if np.any(pos):
        idx = np.nonzero(pos)[0]
        counts, cur = _poisson_vec(lam_half[idx], seed, path_idx[idx], step, process,
                                   cursor[idx])
        nvals[idx] = counts
        cursor[idx] = cur
    shape = nu_half + nvals.astype(np.float64)
    out = np.zeros(n, dtype=np.float64)
    needs = shape > 0.0
    if np.any(needs):
        idx = np.nonzero(needs)[0]
        g, _ = _std_gamma_vec(shape[idx], seed, path_idx[idx], step, process, cursor[idx])
        out[idx] = two_c * g
    return out


def run_frozen(lam_half_factor, two_c, nu_half, seed, process, n_steps, stride,
               out, threads):
    n_paths = out.shape[0]
    path_idx = np.arange(n_paths, dtype=np.uint32)
    x = np.zeros(n_paths, dtype=np.float64)
    out[:, 0] = 0.0
    for k in range(n_steps - 1):
        x = _cir_step_vec(x, lam_half_factor[k], two_c[k], nu_half[k],
                          seed, k, process, path_idx)
        if (k + 1) % stride == 0:
            out[:, (k + 1) // stride] = x
    out[:, n_steps // stride] = 0.0


def run_euler(a_dt, b_dt, dif, seed, process, n_steps, stride, out, threads):
    n_paths = out.shape[0]
    path_idx = np.arange(n_paths, dtype=np.uint32)
    pair0 = np.zeros(n_paths, dtype=np.uint32)
    x = np.zeros(n_paths, dtype=np.float64)
    out[:, 0] = 0.0
    for k in range(n_steps - 1):
        u1, _ = _pair(seed, path_idx, k, process, pair0)
        z = ndtri(u1)
        x = x + (a_dt[k] - b_dt[k] * x) + dif[k] * np.sqrt(x) * z
        x = np.where(x > 0.0, x, 0.0)
        if (k + 1) % stride == 0:
            out[:, (k + 1) // stride] = x
    out[:, n_steps // stride] = 0.0


def transition_many(x, lam_half_factor, two_c, nu_half, seed, step, process, threads):
    x = np.ascontiguousarray(x, dtype=np.float64)
    path_idx = np.arange(x.shape[0], dtype=np.uint32)
    return _cir_step_vec(x, lam_half_factor, two_c, nu_half, seed, step, process,
                         path_idx)


def uniform_pairs(seed, paths, step, process, pair_idx):
    paths = np.ascontiguousarray(paths, dtype=np.uint32)
    pair_idx = np.ascontiguousarray(pair_idx, dtype=np.uint32)
    if paths.shape != pair_idx.shape:
        raise ValueError("paths and pair_idx must have matching shapes")
    return _pair(int(seed), paths, int(step), int(process), pair_idx)
