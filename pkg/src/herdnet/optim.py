"""Adam with bias correction and a step-decay learning-rate schedule.

L2 regularization is not the optimizer's business here: the training loop
adds the penalty to the loss itself, so this is plain Adam. Parameters whose
gradient is absent are skipped entirely (their state does not advance),
which keeps untouched species' parameters bit-identical.
"""

from __future__ import annotations

from typing import Iterable, Optional, Tuple

import numpy as np

from .autodiff import Tensor


class Adam:
    def __init__(self, named_params: Iterable[Tuple[str, Tensor]],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = {
            path: {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0}
            for path, p in self.params
        }

    def step(self, lr: float) -> None:
        for path, p in self.params:
            g = p.grad
            if g is None:
                continue
            slot = self.state[path]
            slot["t"] += 1
            t = slot["t"]
            slot["m"] = self.beta1 * slot["m"] + (1.0 - self.beta1) * g
            slot["v"] = self.beta2 * slot["v"] + (1.0 - self.beta2) * (g * g)
            m_hat = slot["m"] / (1.0 - self.beta1 ** t)
            v_hat = slot["v"] / (1.0 - self.beta2 ** t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None


def step_decay_lr(lr0: float, factor: float, every: int, epoch: int) -> float:
    """lr for a 0-based epoch index: lr0 * factor**(epoch // every)."""
    if every < 1:
        raise ValueError("decay interval must be >= 1")
    return lr0 * factor ** (epoch // every)
