# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: dense kernel blocks and mixed-precision products.

The pure-numpy twin lives in ``_core_py.py``; both expose the same
functions with the same semantics.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, log, exp, fabs, fmax, fmin
cimport openmp

cnp.import_array()

KIND_NALPHA = 0
KIND_GREEN = 1
KIND_GREEN_LOG = 2


cdef inline double _max3(double a, double b, double c) noexcept nogil:
    if b > a:
        a = b
    if c > a:
        a = c
    return a


cdef inline double _ipow(double x, int n) noexcept nogil:
    cdef double out = 1.0
    while n > 0:
        if n & 1:
            out *= x
        x *= x
        n >>= 1
    return out


cdef inline double _rpow(double x, double a) noexcept nogil:
    if a == 0.0:
        return 1.0
    return exp(a * log(x))


cdef inline double _entry(int kind, double r, double dx, double dy, double sx, double sy,
                          double a, int N) noexcept nogil:
    cdef double base, arg, t, m
    if kind == 0:
        m = _max3(r, dx, dy)
        return _rpow(_max3(r, sx, sy), a) / (_ipow(r, N - 2) * m * m)
    base = 1.0 / _ipow(r, N - 2)
    t = dx * dy / (r * r)
    if t < 1.0:
        base = base * t
    if kind == 2:
        a = N / 2.0
    if a != 0.0:
        base = base * _rpow((sx + r) * (sy + r) / (sx * sy), a)
    if kind == 2:
        arg = 1.0 / (r * r)
        t = 1.0 / (dx * dy)
        if t < arg:
            arg = t
        base = base + dx * dy / _rpow(sx * sy, N / 2.0) * fabs(log(arg))
    return base


def kernel_block(int kind, const double[:, ::1] xt, const double[::1] dt, const double[::1] st,
                 const double[:, ::1] xs, const double[::1] ds, const double[::1] ss,
                 const double[::1] rs, double a, int N, bint same=False, int threads=1):
    """Dense float32 block of kernel ``kind`` between targets and sources.

    Within the cell radius ``rs[j]`` of a source the ``r^{2-N}`` factor is
    replaced by the potential of the uniform ball of that radius.
    Coincident points (and the diagonal when ``same``) get 0.
    """
    cdef Py_ssize_t m = xt.shape[0], n = xs.shape[0], dim = xt.shape[1]
    cdef Py_ssize_t i
    out = np.empty((m, n), dtype=np.float32)
    cdef float[:, ::1] K = out
    cdef double[:, ::1] work = np.empty((max(threads, 1), n), dtype=np.float64)
    cdef int tid
    for i in prange(m, nogil=True, num_threads=threads, schedule="static"):
        tid = _thread_id()
        _row(kind, xt, dt[i], st[i], i, xs, ds, ss, rs, a, N, &work[tid, 0], &K[i, 0])
        if same and i < n:
            K[i, i] = 0.0
    return out


cdef inline int _thread_id() noexcept nogil:
    return openmp.omp_get_thread_num()


cdef inline double _blob(double r, double rho, int N) noexcept nogil:
    cdef double q
    if r >= rho:
        return 1.0
    q = r / rho
    return 0.5 * N * _ipow(q, N - 2) * (1.0 - (N - 2.0) / N * q * q)


cdef void _row(int kind, const double[:, ::1] xt, double dx, double sx, Py_ssize_t i,
               const double[:, ::1] xs, const double[::1] ds, const double[::1] ss,
               const double[::1] rs, double a, int N, double* r, float* out) noexcept nogil:
    cdef Py_ssize_t n = xs.shape[0], dim = xs.shape[1], j, c
    cdef double diff, mx, ms, base, t, half = N / 2.0
    for j in range(n):
        r[j] = 0.0
    for c in range(dim):
        for j in range(n):
            diff = xt[i, c] - xs[j, c]
            r[j] += diff * diff
    for j in range(n):
        r[j] = sqrt(r[j])
    if kind == 0:
        for j in range(n):
            mx = fmax(fmax(r[j], dx), ds[j])
            ms = fmax(fmax(r[j], sx), ss[j])
            out[j] = <float>(exp(a * log(ms)) / (_ipow(r[j], N - 2) * mx * mx))
    else:
        if kind == 2:
            a = half
        for j in range(n):
            base = 1.0 / _ipow(r[j], N - 2)
            t = fmin(dx * ds[j] / (r[j] * r[j]), 1.0)
            base = base * t * exp(a * log((sx + r[j]) * (ss[j] + r[j]) / (sx * ss[j])))
            if kind == 2:
                base = base + dx * ds[j] * exp(-half * log(sx * ss[j])) * fabs(log(fmin(1.0 / (r[j] * r[j]), 1.0 / (dx * ds[j]))))
            out[j] = <float>base
    for j in range(n):
        if r[j] <= 0.0:
            out[j] = 0.0
        elif r[j] < rs[j]:
            out[j] = <float>(out[j] * _blob(r[j], rs[j], N))


def kernel_row64(int kind, const double[::1] x, double dx, double sx,
                 const double[:, ::1] xs, const double[::1] ds, const double[::1] ss,
                 const double[::1] rs, double a, int N):
    """Float64 kernel row, used by residual probes."""
    cdef Py_ssize_t n = xs.shape[0], dim = xs.shape[1], j, c
    cdef double r, diff
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for j in range(n):
        r = 0.0
        for c in range(dim):
            diff = x[c] - xs[j, c]
            r += diff * diff
        r = sqrt(r)
        o[j] = 0.0 if r <= 0.0 else _entry(kind, r, dx, ds[j], sx, ss[j], a, N) * _blob(r, rs[j], N)
    return out


def matvec(const float[:, ::1] K, const double[::1] g, int threads=1):
    """``K @ g`` with float32 entries accumulated in double precision."""
    cdef Py_ssize_t m = K.shape[0], n = K.shape[1], i, j
    cdef double acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    for i in prange(m, nogil=True, num_threads=threads, schedule="static"):
        acc = 0.0
        for j in range(n):
            acc = acc + <double>K[i, j] * g[j]
        o[i] = acc
    return out
