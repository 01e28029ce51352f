# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lane of the kernel backend.

Tight typed loops over small matrices; matmul reductions accumulate in
float64 whatever the storage dtype, mirroring the numpy lane.
"""

import numpy as np

cimport cython
from libc.math cimport cos, sin, M_PI

ctypedef fused real_t:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _cgemm_core(real_t[:, ::1] ar, real_t[:, ::1] ai,
                      real_t[:, ::1] br, real_t[:, ::1] bi,
                      double[:, ::1] accr, double[:, ::1] acci) noexcept nogil:
    cdef Py_ssize_t m = ar.shape[0], k = ar.shape[1], n = br.shape[1]
    cdef Py_ssize_t i, t, j
    cdef double arv, aiv
    for i in range(m):
        for t in range(k):
            arv = ar[i, t]
            aiv = ai[i, t]
            for j in range(n):
                accr[i, j] += arv * br[t, j] - aiv * bi[t, j]
                acci[i, j] += arv * bi[t, j] + aiv * br[t, j]


def cgemm(ar, ai, br, bi):
    """Complex matrix product from split parts: (ar+j*ai) @ (br+j*bi)."""
    dtype = ar.dtype
    ar = np.ascontiguousarray(ar)
    ai = np.ascontiguousarray(ai)
    br = np.ascontiguousarray(br)
    bi = np.ascontiguousarray(bi)
    accr = np.zeros((ar.shape[0], br.shape[1]), dtype=np.float64)
    acci = np.zeros((ar.shape[0], br.shape[1]), dtype=np.float64)
    if dtype == np.float32:
        _cgemm_core[float](ar, ai, br, bi, accr, acci)
    else:
        _cgemm_core[double](ar, ai, br, bi, accr, acci)
    return accr.astype(dtype, copy=False), acci.astype(dtype, copy=False)


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _rgemm_core(real_t[:, ::1] a, real_t[:, ::1] b,
                      double[:, ::1] acc) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, t, j
    cdef double av
    for i in range(m):
        for t in range(k):
            av = a[i, t]
            for j in range(n):
                acc[i, j] += av * b[t, j]


def rgemm(a, b):
    """Real matrix product with float64 accumulation."""
    dtype = a.dtype
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    if dtype == np.float32:
        _rgemm_core[float](a, b, acc)
    else:
        _rgemm_core[double](a, b, acc)
    return acc.astype(dtype, copy=False)


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _cmul_core(real_t[::1] ar, real_t[::1] ai,
                     real_t[::1] br, real_t[::1] bi,
                     real_t[::1] cr, real_t[::1] ci) noexcept nogil:
    cdef Py_ssize_t i, n = ar.shape[0]
    cdef double x, y
    for i in range(n):
        x = ar[i] * br[i] - ai[i] * bi[i]
        y = ar[i] * bi[i] + ai[i] * br[i]
        cr[i] = <real_t> x
        ci[i] = <real_t> y


def cmul(ar, ai, br, bi):
    """Elementwise complex product from split parts."""
    shape = ar.shape
    dtype = ar.dtype
    ar = np.ascontiguousarray(ar).ravel()
    ai = np.ascontiguousarray(ai).ravel()
    br = np.ascontiguousarray(br).ravel()
    bi = np.ascontiguousarray(bi).ravel()
    cr = np.empty(ar.shape[0], dtype=dtype)
    ci = np.empty(ar.shape[0], dtype=dtype)
    if dtype == np.float32:
        _cmul_core[float](ar, ai, br, bi, cr, ci)
    else:
        _cmul_core[double](ar, ai, br, bi, cr, ci)
    return cr.reshape(shape), ci.reshape(shape)


def fft_pow2(z, bint inverse=False):
    """Iterative radix-2 transform of a complex128 vector, length 2**k.

    Unscaled in both directions; the caller applies 1/n on the inverse.
    """
    cdef Py_ssize_t n = z.shape[0]
    if n & (n - 1):
        raise ValueError(f"fft_pow2 requires a power-of-two length, got {n}")
    out_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double complex[::1] src = np.ascontiguousarray(z, dtype=np.complex128)
    cdef Py_ssize_t bits = 0, i, j, rev
    while (<Py_ssize_t> 1) << bits < n:
        bits += 1
    for i in range(n):
        rev = 0
        j = i
        for _ in range(bits):
            rev = (rev << 1) | (j & 1)
            j >>= 1
        out[rev] = src[i]

    cdef double sign = 1.0 if inverse else -1.0
    cdef Py_ssize_t size = 2, half, base, step
    cdef double ang
    cdef double complex w, u, t
    cdef double complex[::1] tw
    while size <= n:
        half = size >> 1
        tw_arr = np.empty(half, dtype=np.complex128)
        tw = tw_arr
        for step in range(half):
            ang = sign * 2.0 * M_PI * step / size
            tw[step] = cos(ang) + 1j * sin(ang)
        for base in range(0, n, size):
            for step in range(half):
                t = tw[step] * out[base + half + step]
                u = out[base + step]
                out[base + step] = u + t
                out[base + half + step] = u - t
        size <<= 1
    return out_arr
