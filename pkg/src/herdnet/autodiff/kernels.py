"""Convolution kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
kernels are the fallback. ``HERDNET_BACKEND=numpy`` forces the fallback at
import time, and :func:`set_backend` switches at runtime (used by the
benchmark and the parity tests).
"""

import os

from . import kernels_numpy

try:
    from . import _speedups
except ImportError:
    _speedups = None

_IMPLS = {"numpy": kernels_numpy}
if _speedups is not None:
    _IMPLS["cython"] = _speedups

BACKEND = ""
conv1x3_fwd = None
conv1x3_bwd_input = None
conv1x3_bwd_weight = None


def available_backends():
    return sorted(_IMPLS)


def set_backend(name: str) -> None:
    global BACKEND, conv1x3_fwd, conv1x3_bwd_input, conv1x3_bwd_weight
    if name not in _IMPLS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")
    impl = _IMPLS[name]
    BACKEND = name
    conv1x3_fwd = impl.conv1x3_fwd
    conv1x3_bwd_input = impl.conv1x3_bwd_input
    conv1x3_bwd_weight = impl.conv1x3_bwd_weight


_env = os.environ.get("HERDNET_BACKEND", "").strip().lower()
if _env:
    set_backend(_env)
else:
    set_backend("cython" if _speedups is not None else "numpy")
