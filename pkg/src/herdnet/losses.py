"""Class-balanced focal loss, averaged over species.

Each species' sub-batch gets its own loss: effective-number class weights
(computed from that species' training-fold class counts) scale a focal
cross-entropy term, and the per-species losses are averaged so no species
dominates the gradient no matter how its classes are sized.
"""

from __future__ import annotations

from typing import Dict, Iterable

import numpy as np

from .autodiff import Tensor, ops


def effective_number_weights(counts: Iterable[int], beta: float) -> np.ndarray:
    """Per-class weights (1 - beta) / (1 - beta**n_c), normalized to sum to k.

    The normalization keeps loss magnitudes comparable across species so the
    plain species average stays meaningful.
    """
    counts = np.asarray(list(counts), dtype=np.float64)
    if counts.size == 0 or np.any(counts < 1):
        raise ValueError(f"class counts must all be >= 1, got {counts}")
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"class-balance beta must be in [0, 1), got {beta}")
    weights = (1.0 - beta) / (1.0 - beta ** counts) if beta > 0.0 else np.ones_like(counts)
    return weights * (counts.size / weights.sum())


def focal_loss(logits: Tensor, labels, class_weights: np.ndarray, gamma: float) -> Tensor:
    """Mean over the sub-batch of w_y * (1 - p_y)**gamma * (-log p_y)."""
    labels = np.asarray(labels, dtype=np.intp)
    k = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    if gamma < 0:
        raise ValueError(f"focal gamma must be non-negative, got {gamma}")
    logp = ops.log_softmax(logits)
    logp_y = ops.gather_rows(logp, labels)
    per_sample = ops.neg(logp_y)
    if gamma != 0.0:
        damping = ops.power(ops.sub(1.0, ops.exp(logp_y)), gamma)
        per_sample = ops.mul(damping, per_sample)
    weights = np.asarray(class_weights, dtype=np.float64)
    if weights.shape != (k,):
        raise ValueError(f"class weights shape {weights.shape} != ({k},)")
    per_sample = ops.mul(Tensor(weights[labels]), per_sample)
    return ops.mean_all(per_sample)


def species_average(losses: Dict[int, Tensor], expected_species: Iterable[int]) -> Tensor:
    """Plain average of the per-species losses; every species must report one."""
    expected = sorted(set(expected_species))
    missing = [s for s in expected if s not in losses]
    if missing:
        raise ValueError(f"missing species losses for {missing}")
    total = None
    for s in expected:
        total = losses[s] if total is None else ops.add(total, losses[s])
    return ops.mul(total, 1.0 / len(expected))
