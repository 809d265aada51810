# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernel for the square-root bridge.

Every random draw is a pure function of (master seed, path, step, process,
pair index) through a Philox-4x32-10 counter block, so ensembles are
bit-reproducible for any thread count or scheduling.  The numpy fallback
(_kernel_py) implements the identical draw protocol; the two modules must be
kept in lockstep op for op (the extension is compiled with -ffp-contract=off
for that reason).

Draw protocol per frozen-coefficient transition:
  pair 0..  Poisson(lam/2): one pair (inversion, lam/2 < 10) or one pair per
            attempt (PTRS otherwise); skipped entirely when lam = 0.
  then      Gamma(nu/2 + N): one pair per Marsaglia-Tsang attempt
            (u1 -> normal via ndtri, u2 -> accept test), plus one extra pair
            for the u^(1/shape) boost when shape < 1.
Truncated-Euler transitions consume exactly one pair (u1 -> normal).
"""

import numpy as np

from libc.stdint cimport uint32_t, uint64_t, int64_t
from libc.math cimport exp, log, sqrt, floor, fabs
from cython.parallel cimport prange
from scipy.special.cython_special cimport ndtri

NAME = "compiled"

cdef double _POISSON_SWITCH = 10.0
cdef double _HALF_LN_2PI = 0.9189385332046727
cdef double _INV_2_53 = 1.0 / 9007199254740992.0

cdef double LOG_FACT[1024]

cdef void _fill_tables() noexcept:
    cdef int i
    LOG_FACT[0] = 0.0
    for i in range(1, 1024):
        LOG_FACT[i] = LOG_FACT[i - 1] + log(<double> i)

_fill_tables()


cdef inline void _philox(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
                         uint32_t k0, uint32_t k1, uint32_t* out) noexcept nogil:
    cdef int i
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1, n0, n1, n2, n3
    for i in range(10):
        p0 = (<uint64_t> 0xD2511F53u) * c0
        p1 = (<uint64_t> 0xCD9E8D57u) * c2
        hi0 = <uint32_t> (p0 >> 32)
        lo0 = <uint32_t> (p0 & 0xFFFFFFFFu)
        hi1 = <uint32_t> (p1 >> 32)
        lo1 = <uint32_t> (p1 & 0xFFFFFFFFu)
        n0 = hi1 ^ c1 ^ k0
        n1 = lo1
        n2 = hi0 ^ c3 ^ k1
        n3 = lo0
        c0 = n0
        c1 = n1
        c2 = n2
        c3 = n3
        k0 = k0 + 0x9E3779B9u
        k1 = k1 + 0xBB67AE85u
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline void _pair(uint64_t seed, uint32_t path, uint32_t step, uint32_t process,
                       uint32_t pair_idx, double* u1, double* u2) noexcept nogil:
    cdef uint32_t w[4]
    cdef uint64_t x1, x2
    _philox(pair_idx, step, path, process,
            <uint32_t> (seed & 0xFFFFFFFFu), <uint32_t> (seed >> 32), w)
    x1 = ((<uint64_t> w[0]) << 32) | w[1]
    x2 = ((<uint64_t> w[2]) << 32) | w[3]
    u1[0] = ((x1 >> 11) + 0.5) * _INV_2_53
    u2[0] = ((x2 >> 11) + 0.5) * _INV_2_53


cdef inline double _log_factorial(int64_t k) noexcept nogil:
    cdef double z, z3, z5
    if k < 1024:
        return LOG_FACT[k]
    z = <double> k + 1.0
    z3 = z * z * z
    z5 = z3 * z * z
    return ((z - 0.5) * log(z) - z + _HALF_LN_2PI
            + 1.0 / (12.0 * z) - 1.0 / (360.0 * z3) + 1.0 / (1260.0 * z5))


cdef inline int64_t _poisson(double mu, uint64_t seed, uint32_t path, uint32_t step,
                             uint32_t process, uint32_t* cursor) noexcept nogil:
    cdef double u1, u2, t, s, b, a, inv_alpha, v_r, us, U, V
    cdef int64_t k
    if mu < _POISSON_SWITCH:
        # multiplicative CDF inversion: one uniform per draw
        _pair(seed, path, step, process, cursor[0], &u1, &u2)
        cursor[0] += 1
        t = exp(-mu)
        s = t
        k = 0
        while u1 > s and k < 1024:
            k += 1
            t *= mu / <double> k
            s += t
        return k
    # PTRS transformed rejection, valid for mu >= 10
    b = 0.931 + 2.53 * sqrt(mu)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        _pair(seed, path, step, process, cursor[0], &u1, &u2)
        cursor[0] += 1
        U = u1 - 0.5
        V = u2
        us = 0.5 - fabs(U)
        k = <int64_t> floor((2.0 * a / us + b) * U + mu + 0.43)
        if us >= 0.07 and V <= v_r:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        if log(V * inv_alpha / (a / (us * us) + b)) <= k * log(mu) - mu - _log_factorial(k):
            return k


cdef inline double _std_gamma(double shape, uint64_t seed, uint32_t path, uint32_t step,
                              uint32_t process, uint32_t* cursor) noexcept nogil:
    cdef double sh, d, c, u1, u2, z, t, v, g, z2
    sh = shape if shape >= 1.0 else shape + 1.0
    d = sh - 1.0 / 3.0
    c = 1.0 / sqrt(9.0 * d)
    while True:
        _pair(seed, path, step, process, cursor[0], &u1, &u2)
        cursor[0] += 1
        z = ndtri(u1)
        t = 1.0 + c * z
        if t <= 0.0:
            continue
        v = t * t * t
        z2 = z * z
        if u2 < 1.0 - 0.0331 * z2 * z2:
            g = d * v
            break
        if log(u2) < 0.5 * z2 + d * (1.0 - v + log(v)):
            g = d * v
            break
    if shape < 1.0:
        _pair(seed, path, step, process, cursor[0], &u1, &u2)
        cursor[0] += 1
        g *= exp(log(u1) / shape)
    return g


cdef inline double _cir_step(double x, double lam_half_factor, double two_c, double nu_half,
                             uint64_t seed, uint32_t path, uint32_t step,
                             uint32_t process) noexcept nogil:
    cdef uint32_t cursor = 0
    cdef double lam_half, shape
    cdef int64_t n = 0
    lam_half = x * lam_half_factor
    if lam_half > 0.0:
        n = _poisson(lam_half, seed, path, step, process, &cursor)
    shape = nu_half + <double> n
    if shape == 0.0:
        return 0.0
    return two_c * _std_gamma(shape, seed, path, step, process, &cursor)


cdef inline double _euler_step(double x, double a_dt, double b_dt, double dif,
                               uint64_t seed, uint32_t path, uint32_t step,
                               uint32_t process) noexcept nogil:
    cdef double u1, u2, z, xn
    _pair(seed, path, step, process, 0, &u1, &u2)
    z = ndtri(u1)
    xn = x + (a_dt - b_dt * x) + dif * sqrt(x) * z
    return xn if xn > 0.0 else 0.0


cdef void _frozen_path(const double* hlf, const double* twoc, const double* nuh,
                       uint64_t seed, uint32_t process, Py_ssize_t p,
                       Py_ssize_t n_steps, Py_ssize_t stride,
                       double[:, ::1] out) noexcept nogil:
    cdef double x = 0.0
    cdef Py_ssize_t k
    out[p, 0] = 0.0
    for k in range(n_steps - 1):
        x = _cir_step(x, hlf[k], twoc[k], nuh[k], seed, <uint32_t> p, <uint32_t> k, process)
        if (k + 1) % stride == 0:
            out[p, (k + 1) // stride] = x
    out[p, n_steps // stride] = 0.0


cdef void _euler_path(const double* a_dt, const double* b_dt, const double* dif,
                      uint64_t seed, uint32_t process, Py_ssize_t p,
                      Py_ssize_t n_steps, Py_ssize_t stride,
                      double[:, ::1] out) noexcept nogil:
    cdef double x = 0.0
    cdef Py_ssize_t k
    out[p, 0] = 0.0
    for k in range(n_steps - 1):
        x = _euler_step(x, a_dt[k], b_dt[k], dif[k], seed, <uint32_t> p, <uint32_t> k, process)
        if (k + 1) % stride == 0:
            out[p, (k + 1) // stride] = x
    out[p, n_steps // stride] = 0.0


def run_frozen(double[::1] lam_half_factor, double[::1] two_c, double[::1] nu_half,
               unsigned long long seed, unsigned int process,
               Py_ssize_t n_steps, Py_ssize_t stride, double[:, ::1] out, int threads):
    """Fill out[p, :] with recorded path values of the frozen-exact scheme."""
    cdef Py_ssize_t n_paths = out.shape[0]
    cdef Py_ssize_t p
    if threads < 1:
        threads = 1
    for p in prange(n_paths, nogil=True, num_threads=threads, schedule='static'):
        _frozen_path(&lam_half_factor[0], &two_c[0], &nu_half[0],
                     seed, process, p, n_steps, stride, out)


def run_euler(double[::1] a_dt, double[::1] b_dt, double[::1] dif,
              unsigned long long seed, unsigned int process,
              Py_ssize_t n_steps, Py_ssize_t stride, double[:, ::1] out, int threads):
    """Fill out[p, :] with recorded path values of the truncated-Euler scheme."""
    cdef Py_ssize_t n_paths = out.shape[0]
    cdef Py_ssize_t p
    if threads < 1:
        threads = 1
    for p in prange(n_paths, nogil=True, num_threads=threads, schedule='static'):
        _euler_path(&a_dt[0], &b_dt[0], &dif[0], seed, process, p, n_steps, stride, out)


def transition_many(double[::1] x, double lam_half_factor, double two_c, double nu_half,
                    unsigned long long seed, unsigned int step, unsigned int process,
                    int threads):
    """One frozen-exact transition applied to a vector of states; element p
    uses path index p in the counter."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    if threads < 1:
        threads = 1
    for p in prange(n, nogil=True, num_threads=threads, schedule='static'):
        out[p] = _cir_step(x[p], lam_half_factor, two_c, nu_half,
                           seed, <uint32_t> p, step, process)
    return out_arr


def uniform_pairs(unsigned long long seed, paths, unsigned int step,
                  unsigned int process, pair_idx):
    """Raw counter-based uniform pairs, exposed for cross-backend RNG tests."""
    paths_arr = np.ascontiguousarray(paths, dtype=np.uint32)
    pair_arr = np.ascontiguousarray(pair_idx, dtype=np.uint32)
    if paths_arr.shape != pair_arr.shape:
        raise ValueError("paths and pair_idx must have matching shapes")
    cdef uint32_t[::1] pv = paths_arr
    cdef uint32_t[::1] cv = pair_arr
    cdef Py_ssize_t n = pv.shape[0]
    u1_arr = np.empty(n, dtype=np.float64)
    u2_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] u1 = u1_arr
    cdef double[::1] u2 = u2_arr
    cdef Py_ssize_t i
    for i in range(n):
        _pair(seed, pv[i], step, process, cv[i], &u1[i], &u2[i])
    return u1_arr, u2_arr
