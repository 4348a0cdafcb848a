"""Minimal float64 reverse-mode autodiff engine."""

from . import kernels, ops
from .gradcheck import GradCheckReport, grad_check
from .tensor import Tensor, backward, debug_numerics_enabled, no_grad, set_debug_numerics

__all__ = [
    "GradCheckReport",
    "Tensor",
    "backward",
    "debug_numerics_enabled",
    "grad_check",
    "kernels",
    "no_grad",
    "ops",
    "set_debug_numerics",
]
