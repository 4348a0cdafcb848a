"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from .ops import as_tensor
from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    """Outcome of one tape-vs-central-differences comparison."""

    max_rel_error: float
    tol: float
    failures: List[Tuple[int, int, float, float, float]] = field(default_factory=list)
    # failures: (argument index, flat index, tape gradient, fd gradient, rel error)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __str__(self) -> str:
        status = "ok" if self.ok else f"{len(self.failures)} failing indices"
        return f"max rel err {self.max_rel_error:.3e} (tol {self.tol:.1e}): {status}"


def grad_check(f: Callable[..., Tensor], *points, step: float = 1e-5,
               tol: float = 1e-4, floor: float = 1e-2) -> GradCheckReport:
    """Compare tape gradients of a scalar function against central differences.

    Each entry of every point is perturbed by ``+-step``; the relative error
    uses ``max(|tape|, |fd|, floor)`` as denominator so near-zero gradients
    are judged on an absolute scale. ``f`` must be deterministic and free of
    side effects, because it is re-evaluated twice per parameter entry.
    """
    pts = []
    for p in points:
        t = as_tensor(p)
        if not t.data.flags["C_CONTIGUOUS"]:
            t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
        pts.append(t)

    out = f(*pts)
    if out.data.ndim != 0:
        raise ValueError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    backward(out)
    tape_grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in pts]

    max_rel = 0.0
    failures: List[Tuple[int, int, float, float, float]] = []
    for ai, t in enumerate(pts):
        flat = t.data.reshape(-1)
        tape_flat = tape_grads[ai].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f(*pts).data)
            flat[i] = orig - step
            f_minus = float(f(*pts).data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            tape = float(tape_flat[i])
            rel = abs(tape - fd) / max(abs(tape), abs(fd), floor)
            max_rel = max(max_rel, rel)
            if rel >= tol:
                failures.append((ai, i, tape, fd, rel))
    return GradCheckReport(max_rel_error=max_rel, tol=tol, failures=failures)
