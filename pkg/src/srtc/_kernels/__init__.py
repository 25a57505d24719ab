"""Kernel backend selection.

The elementwise activation kernels and the fused Adam update sit in the
innermost training loop.  A Cython extension (``_speed``) implements
them as single-pass C loops; ``_numpy`` is the pure-numpy fallback.  The
backend is chosen once at import time:

* ``SRTC_KERNELS=numpy``  force the fallback,
* ``SRTC_KERNELS=cython`` require the extension (ImportError if absent),
* unset / ``auto``        prefer the extension when importable.

Matrix products are delegated to numpy/BLAS in both backends; see
benchmarks/bench_kernels.py for the measured difference.
"""

import os

from srtc._kernels import _numpy

_choice = os.environ.get("SRTC_KERNELS", "auto").lower()

if _choice not in ("auto", "cython", "numpy"):
    raise ValueError(f"SRTC_KERNELS must be auto|cython|numpy, got {_choice!r}")

if _choice == "numpy":
    _impl = _numpy
else:
    try:
        from srtc._kernels import _speed as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _numpy

BACKEND = _impl.BACKEND_NAME

relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
tanh_fwd = _impl.tanh_fwd
tanh_bwd = _impl.tanh_bwd
softplus_fwd = _impl.softplus_fwd
softplus_bwd = _impl.softplus_bwd
adam_update = _impl.adam_update


def active_backend() -> str:
    """Name of the kernel backend selected at import ('cython' or 'numpy')."""
    return BACKEND
