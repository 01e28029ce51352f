"""numpy lane of the kernel backend.

Reference implementations of the hot kernels. Matrix products up-cast to
float64 for the reduction and cast back to the storage dtype, matching the
compiled lane's double accumulators.
"""

from functools import lru_cache

import numpy as np


def cgemm(ar, ai, br, bi):
    """Complex matrix product from split parts: (ar+j*ai) @ (br+j*bi)."""
    a_r = np.asarray(ar, dtype=np.float64)
    a_i = np.asarray(ai, dtype=np.float64)
    b_r = np.asarray(br, dtype=np.float64)
    b_i = np.asarray(bi, dtype=np.float64)
    cr = a_r @ b_r - a_i @ b_i
    ci = a_r @ b_i + a_i @ b_r
    return cr.astype(ar.dtype, copy=False), ci.astype(ar.dtype, copy=False)


def rgemm(a, b):
    """Real matrix product with float64 accumulation."""
    c = np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)
    return c.astype(a.dtype, copy=False)


def cmul(ar, ai, br, bi):
    """Elementwise complex product from split parts."""
    return ar * br - ai * bi, ar * bi + ai * br


@lru_cache(maxsize=64)
def _bit_reversal(n):
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=256)
def _twiddles(size, sign):
    w = np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)
    w.setflags(write=False)
    return w


def fft_pow2(z, inverse=False):
    """Iterative radix-2 transform of a complex128 vector, length 2**k.

    Returns the unscaled sum in both directions; the caller applies 1/n on
    the inverse.
    """
    n = z.shape[0]
    if n & (n - 1):
        raise ValueError(f"fft_pow2 requires a power-of-two length, got {n}")
    out = np.array(z[_bit_reversal(n)], dtype=np.complex128) if n > 1 else z.astype(np.complex128)
    sign = 1 if inverse else -1
    size = 2
    while size <= n:
        half = size >> 1
        w = _twiddles(size, sign)
        v = out.reshape(-1, size)
        t = v[:, half:] * w
        upper = v[:, :half] + t
        lower = v[:, :half] - t
        v[:, :half] = upper
        v[:, half:] = lower
        size <<= 1
    return out
