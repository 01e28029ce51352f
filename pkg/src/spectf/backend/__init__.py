"""Kernel backend selection.

The hot numeric kernels (complex/real matrix products, elementwise complex
product, radix-2 FFT butterflies) ship in two interchangeable lanes: a
vectorized numpy lane (`kernels_py`) and a compiled Cython lane
(`_fastkern`). The compiled lane is picked at import time when it built;
otherwise the numpy lane is used. Override with the SPECTF_BACKEND
environment variable (``ext``, ``py`` or ``auto``) or `use()`.

Both lanes implement the same contract: inputs are 2-D C-contiguous real
arrays (float32 or float64, matching dtypes) except `fft_pow2`, which takes
a 1-D complex128 array of power-of-two length. Matrix products accumulate
in float64 regardless of storage dtype.
"""

import os

from . import kernels_py

try:
    from . import _fastkern
except ImportError:  # extension not built; numpy lane only
    _fastkern = None

_impl = kernels_py
_name = "py"


def available():
    """Names of the lanes importable in this installation."""
    return ("py", "ext") if _fastkern is not None else ("py",)


def use(lane="auto"):
    """Select the active kernel lane; returns the resolved name."""
    global _impl, _name
    if lane == "auto":
        lane = "ext" if _fastkern is not None else "py"
    if lane == "ext":
        if _fastkern is None:
            raise RuntimeError(
                "compiled kernels are not built; reinstall with a C toolchain "
                "or set SPECTF_BACKEND=py"
            )
        _impl, _name = _fastkern, "ext"
    elif lane == "py":
        _impl, _name = kernels_py, "py"
    else:
        raise ValueError(f"unknown backend {lane!r} (expected auto|ext|py)")
    return _name


def name():
    """Name of the active lane ('py' or 'ext')."""
    return _name


def cgemm(ar, ai, br, bi):
    return _impl.cgemm(ar, ai, br, bi)


def rgemm(a, b):
    return _impl.rgemm(a, b)


def cmul(ar, ai, br, bi):
    return _impl.cmul(ar, ai, br, bi)


def fft_pow2(z, inverse=False):
    return _impl.fft_pow2(z, inverse)


use(os.environ.get("SPECTF_BACKEND", "auto"))
