"""Finite-difference verification suite for every operator and the full net.

Each entry compares tape gradients against central differences on small
random inputs drawn in [-1, 1]. The end-to-end entry pushes a mixed-species
batch through a tiny network into the species-averaged focal loss and
differentiates every parameter, batch-norm statistics included (training
mode, running updates frozen so re-evaluations see identical state).
"""

from __future__ import annotations

from typing import Dict, List, Tuple

import numpy as np

from .autodiff import Tensor, grad_check, ops
from .autodiff.gradcheck import GradCheckReport
from .config import ModelConfig
from .losses import focal_loss, species_average
from .model import ActivityNet, build_model


def _coefs(rng: np.random.Generator, shape) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, shape))


def operator_checks(seed: int = 0, step: float = 1e-5, tol: float = 1e-4,
                    ) -> List[Tuple[str, GradCheckReport]]:
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-1.0, 1.0, shape)
    entries: List[Tuple[str, GradCheckReport]] = []

    def check(name, fn, *points):
        entries.append((name, grad_check(fn, *points, step=step, tol=tol)))

    c1 = _coefs(rng, (2, 4, 1, 8))
    check("conv1x3",
          lambda x, w, b: ops.sum_all(ops.mul(ops.conv1x3(x, w, b, 1, 1), c1)),
          u(2, 3, 1, 8), u(4, 3, 1, 3), u(4))
    c2 = _coefs(rng, (2, 4, 1, 3))
    check("conv1x3/stride2",
          lambda x, w, b: ops.sum_all(ops.mul(ops.conv1x3(x, w, b, 2, 0), c2)),
          u(2, 3, 1, 7), u(4, 3, 1, 3), u(4))
    c3 = _coefs(rng, (3, 2))
    check("matmul",
          lambda a, b: ops.sum_all(ops.mul(ops.matmul(a, b), c3)),
          u(3, 4), u(4, 2))
    c4 = _coefs(rng, (2, 3, 1, 4))
    check("maxpool1d",
          lambda x: ops.sum_all(ops.mul(ops.maxpool1d(x, 2, 2), c4)),
          u(2, 3, 1, 8))
    c5 = _coefs(rng, (2, 3))
    check("global_avg_pool",
          lambda x: ops.sum_all(ops.mul(ops.global_avg_pool(x), c5)),
          u(2, 3, 1, 6))
    c6 = _coefs(rng, (4, 3))
    check("linear",
          lambda x, w, b: ops.sum_all(ops.mul(ops.linear(x, w, b), c6)),
          u(4, 5), u(3, 5), u(3))
    c7 = _coefs(rng, (3, 5))
    check("log_softmax",
          lambda x: ops.sum_all(ops.mul(ops.log_softmax(x), c7)),
          u(3, 5))
    c8 = _coefs(rng, (3, 4))
    check("relu", lambda x: ops.sum_all(ops.mul(ops.relu(x), c8)), u(3, 4))
    check("tanh", lambda x: ops.sum_all(ops.mul(ops.tanh(x), c8)), u(3, 4))
    c9 = _coefs(rng, (6,))
    check("elementwise",
          lambda a, b: ops.sum_all(ops.mul(ops.mul(ops.exp(a), ops.power(ops.add(
              ops.mul(b, b), 0.5), 1.7)), c9)),
          u(6), u(6))
    c10 = _coefs(rng, (8, 5, 1, 7))
    check("batch_norm/train-4d",
          lambda x, g, b: ops.sum_all(ops.mul(ops.batch_norm_train(x, g, b, 1e-5)[0], c10)),
          u(8, 5, 1, 7), rng.uniform(0.5, 1.5, 5), u(5))
    c11 = _coefs(rng, (8, 4))
    check("batch_norm/train-2d",
          lambda x, g, b: ops.sum_all(ops.mul(ops.batch_norm_train(x, g, b, 1e-5)[0], c11)),
          u(8, 4), rng.uniform(0.5, 1.5, 4), u(4))
    labels = rng.integers(0, 4, size=6)
    weights = rng.uniform(0.5, 2.0, 4)
    check("focal_loss",
          lambda z: focal_loss(z, labels, weights, 2.0),
          u(6, 4))
    return entries


def tiny_model_config(species_classes: Dict[int, int] = None) -> ModelConfig:
    return ModelConfig(
        species_classes=species_classes or {0: 2, 1: 3},
        input_len=12, widths=(3, 4), fc_dim=5, rank=2, init_sigma=0.2,
    )


def model_loss_fn(model: ActivityNet, batch: Dict[int, np.ndarray],
                  labels: Dict[int, np.ndarray], weights: Dict[int, np.ndarray],
                  focal_gamma: float = 2.0):
    """Scalar function of the model's own parameters (passed as leaves)."""
    tensors = {s: Tensor(x) for s, x in batch.items()}

    def f(*_params):
        model.train()
        logits = model.forward(tensors, update_stats=False)
        losses = {s: focal_loss(logits[s], labels[s], weights[s], focal_gamma)
                  for s in logits}
        return species_average(losses, sorted(logits))

    return f


def end_to_end_check(seed: int = 0, step: float = 1e-5, tol: float = 1e-4,
                     ) -> Tuple[str, GradCheckReport]:
    """Mixed-species batch (3 + 3 windows) through the full forward and loss."""
    cfg = tiny_model_config()
    model = build_model(cfg, seed=seed)
    # nudge the zero-initialised branch factors so their gradients are generic
    rng = np.random.default_rng(seed + 1)
    for path, p in model.named_parameters():
        if path.endswith(".up"):
            p.data = rng.uniform(-0.3, 0.3, p.data.shape)
    batch = {s: rng.uniform(-1.0, 1.0, (3, 3, 1, cfg.input_len)) for s in (0, 1)}
    labels = {0: rng.integers(0, 2, 3), 1: rng.integers(0, 3, 3)}
    weights = {0: np.array([1.2, 0.8]), 1: np.array([0.9, 1.3, 0.8])}
    f = model_loss_fn(model, batch, labels, weights)
    report = grad_check(f, *model.parameters(), step=step, tol=tol)
    return "end_to_end/mixed-batch", report


def full_suite(seed: int = 0, step: float = 1e-5, tol: float = 1e-4,
               ) -> List[Tuple[str, GradCheckReport]]:
    entries = operator_checks(seed=seed, step=step, tol=tol)
    entries.append(end_to_end_check(seed=seed, step=step, tol=tol))
    return entries
