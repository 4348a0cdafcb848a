"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operator records its inputs and a backward rule on the output tensor,
so the implicit tape is the operator graph itself. Calling :func:`backward`
on a scalar walks that graph once in reverse topological order and
accumulates gradients additively into every tensor that requires them.
Callers zero gradients between optimizer steps.
"""

from __future__ import annotations

import os
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

_debug_numerics = os.environ.get("HERDNET_DEBUG_NUMERICS", "").strip() not in ("", "0")
_grad_enabled = True


def set_debug_numerics(enabled: bool) -> None:
    """Toggle NaN/Inf assertions on every operator output."""
    global _debug_numerics
    _debug_numerics = bool(enabled)


def debug_numerics_enabled() -> bool:
    return _debug_numerics


class no_grad:
    """Context manager that suppresses graph recording (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A dense n-d float64 array that can participate in a backward pass.

    ``data`` is row-major; ``grad`` is either None or an array of the same
    shape. Tensors produced by operators hold references to their parents
    and a backward rule; leaf tensors hold neither. Tensor data must be
    treated as immutable once the tensor has been used in an operator
    (parameter updates happen between graphs, never inside one).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._op = ""
        self._done = False
        if _debug_numerics and not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite values in tensor construction")

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Tuple["Tensor", ...],
                 backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
                 op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._op = op
        out._done = False
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        if _debug_numerics and not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite values in output of {op!r}")
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = f" op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


def _topo_order(root: Tensor) -> list:
    order: list = []
    seen = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor requiring grad.

    The loss must be a scalar still connected to its graph; a second call on
    the same output is refused because the accumulated gradients would
    silently double.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("backward() on a detached graph: no input requires gradients")
    if loss._done:
        raise RuntimeError("backward() already ran for this output; rebuild the graph first")
    loss._done = True

    order = _topo_order(loss)
    seed = np.ones((), dtype=np.float64)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        parent_grads = node._backward(node.grad)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
