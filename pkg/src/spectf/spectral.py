"""Discrete Fourier transforms and spectral identities.

Convention: unnormalized forward sum ``X_k = sum_t x_t exp(-2*pi*j*k*t/n)``
and ``1/n`` on the inverse. All transforms run in float64/complex128; the
training engine converts at its own boundary.

`dft_naive`/`idft_naive` are the direct O(n^2) oracles; `fft` is the fast
path (iterative radix-2 for power-of-two lengths, Bluestein chirp reduction
to a power-of-two convolution otherwise) and is tested against the oracle,
never the reverse.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import backend


def _as_complex_vector(x, op):
    z = np.asarray(x, dtype=np.complex128)
    if z.ndim != 1 or z.size == 0:
        raise ValueError(f"{op}: expected a nonempty 1-D sequence, got shape {z.shape}")
    if not np.all(np.isfinite(z.view(np.float64))):
        raise ValueError(f"{op}: input contains NaN or Inf")
    return z


def _as_real_vector(x, op):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{op}: expected a nonempty 1-D real sequence, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{op}: input contains NaN or Inf")
    return v


@dataclass(frozen=True)
class Spectrum:
    """Half spectrum of a real series: the first n//2+1 bins plus the
    original length n, which disambiguates odd/even reconstruction."""

    bins: np.ndarray
    origin_length: int

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        object.__setattr__(self, "bins", bins)
        if self.origin_length < 1:
            raise ValueError("Spectrum: origin_length must be positive")
        if bins.ndim != 1 or bins.size != self.origin_length // 2 + 1:
            raise ValueError(
                f"Spectrum: expected {self.origin_length // 2 + 1} bins for "
                f"origin_length {self.origin_length}, got {bins.size}"
            )

    @property
    def amplitudes(self):
        return np.abs(self.bins)


def dft_naive(x):
    """Direct O(n^2) forward transform; the oracle for the fast path."""
    z = _as_complex_vector(x, "dft_naive")
    n = z.size
    k = np.arange(n)
    kernel = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return kernel @ z


def idft_naive(X):
    """Direct O(n^2) inverse transform with the 1/n normalization."""
    z = _as_complex_vector(X, "idft_naive")
    n = z.size
    k = np.arange(n)
    kernel = np.exp(2j * np.pi * np.outer(k, k) / n)
    return (kernel @ z) / n


@lru_cache(maxsize=64)
def _bluestein_plan(n, sign, lane):
    # Chirp exponents reduced mod 2n to keep the angle computation exact
    # for large t; the plan is keyed on the kernel lane because the kernel
    # FFT is computed with whichever lane is active.
    t = np.arange(n)
    chirp = np.exp(sign * 1j * np.pi * ((t * t) % (2 * n)) / n)
    m = 1
    while m < 2 * n - 1:
        m <<= 1
    kernel = np.zeros(m, dtype=np.complex128)
    kernel[:n] = np.conj(chirp)
    kernel[m - n + 1:] = np.conj(chirp[1:][::-1])
    kernel_fft = backend.fft_pow2(kernel, False)
    chirp.setflags(write=False)
    kernel_fft.setflags(write=False)
    return chirp, kernel_fft, m


def _transform(z, inverse):
    """Unscaled fast transform of a complex128 vector, any length."""
    n = z.size
    if n == 1:
        return z.copy()
    if n & (n - 1) == 0:
        return backend.fft_pow2(z, inverse)
    sign = 1 if inverse else -1
    chirp, kernel_fft, m = _bluestein_plan(n, sign, backend.name())
    a = np.zeros(m, dtype=np.complex128)
    a[:n] = z * chirp
    conv = backend.fft_pow2(backend.fft_pow2(a, False) * kernel_fft, True) / m
    return chirp * conv[:n]


def fft(x):
    """Fast forward transform, value-identical to `dft_naive`."""
    z = _as_complex_vector(x, "fft")
    return _transform(z, False)


def ifft(X):
    """Fast inverse transform, value-identical to `idft_naive`."""
    z = _as_complex_vector(X, "ifft")
    return _transform(z, True) / z.size


def rfft(x):
    """Half spectrum of a real series: the first n//2+1 bins of `fft`."""
    v = _as_real_vector(x, "rfft")
    n = v.size
    full = _transform(v.astype(np.complex128), False)
    return Spectrum(full[: n // 2 + 1], n)


def irfft(spectrum):
    """Reconstruct the real series a `Spectrum` came from.

    The half spectrum is completed by Hermitian symmetry, inverse
    transformed, and the (tolerance-level) imaginary residue discarded.
    """
    bins = np.asarray(spectrum.bins, dtype=np.complex128)
    n = spectrum.origin_length
    m = n // 2 + 1
    if bins.size != m:
        raise ValueError(
            f"irfft: {bins.size} bins inconsistent with origin_length {n} "
            f"(expected {m})"
        )
    full = np.empty(n, dtype=np.complex128)
    full[:m] = bins
    if n > 1:
        full[m:] = np.conj(bins[1 : n - m + 1])[::-1]
    return (_transform(full, True) / n).real


def circular_convolve(x, h):
    """Direct O(n^2) circular convolution; the time-domain side of the
    convolution-theorem check."""
    xv = _as_real_vector(x, "circular_convolve")
    hv = _as_real_vector(h, "circular_convolve")
    if xv.size != hv.size:
        raise ValueError(
            f"circular_convolve: length mismatch {xv.size} vs {hv.size}"
        )
    n = xv.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return hv[idx] @ xv


def signal_energy(x):
    """Sum of squared magnitudes in the time domain."""
    z = _as_complex_vector(x, "signal_energy")
    return float(np.sum(np.abs(z) ** 2))


def spectral_energy(X):
    """(1/n) * sum of squared magnitudes of a full spectrum; equals
    `signal_energy` of the originating series under this transform
    convention."""
    z = _as_complex_vector(X, "spectral_energy")
    return float(np.sum(np.abs(z) ** 2) / z.size)
