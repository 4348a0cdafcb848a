"""Training protocol: balanced batches, species-averaged loss, Adam.

Every batch carries the same number of windows from each species; before
training, every species' pool is stratified-downsampled to the smallest
species so none dominates. The objective is the species-averaged
class-balanced focal loss plus an L2 penalty on conv/FC weights added
directly to the loss. The model with the best mean validation accuracy
across species is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .autodiff import Tensor, backward, no_grad, ops
from .config import TrainConfig
from .data import ChannelStandardizer
from .losses import effective_number_weights, focal_loss, species_average
from .model import ActivityNet
from .optim import Adam, step_decay_lr

Split = Dict[int, Tuple[np.ndarray, np.ndarray]]  # species -> (windows (n,3,L), labels (n,))


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch_index: int, detail: str):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_index}: {detail}")
        self.epoch = epoch
        self.batch_index = batch_index


def _stratified_quota(counts: np.ndarray, target: int) -> np.ndarray:
    """Split ``target`` across classes proportionally, within +-1 (largest remainder)."""
    raw = counts * (target / counts.sum())
    quota = np.floor(raw).astype(np.int64)
    remainder = raw - quota
    short = target - int(quota.sum())
    for idx in np.argsort(-remainder, kind="stable")[:short]:
        quota[idx] += 1
    return quota


def _stratified_pick(labels: np.ndarray, target: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``target`` positions from ``labels`` keeping class proportions within +-1."""
    classes = np.unique(labels)
    counts = np.array([(labels == c).sum() for c in classes])
    quota = _stratified_quota(counts, target)
    picked = []
    for c, q in zip(classes, quota):
        positions = np.flatnonzero(labels == c)
        picked.append(rng.permutation(positions)[:q])
    return np.sort(np.concatenate(picked))


def equalize_species(pools: Dict[int, np.ndarray], labels: Dict[int, np.ndarray],
                     seed: int) -> Dict[int, np.ndarray]:
    """Downsample every species' pool to the smallest species' size.

    ``pools`` maps species to index arrays, ``labels`` to the label of each
    pooled index. Sampling is stratified by class so proportions survive
    within +-1 sample; a species already at the minimum keeps its exact
    membership.
    """
    for s, pool in pools.items():
        if len(pool) == 0:
            raise ValueError(f"species {s} has an empty training pool")
    target = min(len(pool) for pool in pools.values())
    out = {}
    for s in sorted(pools):
        pool = np.asarray(pools[s])
        if len(pool) == target:
            out[s] = pool.copy()
            continue
        rng = np.random.default_rng([seed, s])
        keep = _stratified_pick(np.asarray(labels[s]), target, rng)
        out[s] = pool[keep]
    return out


def make_batches(pools: Dict[int, np.ndarray], batch_size: int, seed: int,
                 epoch: int) -> Iterator[Dict[int, np.ndarray]]:
    """Yield balanced batches of index arrays, batch_size/S per species.

    Each epoch reshuffles every pool with its own seeded stream; the epoch
    ends when the shortest pool runs out, leftovers dropped.
    """
    species = sorted(pools)
    if batch_size % len(species) != 0:
        raise ValueError(f"batch size {batch_size} is not divisible by {len(species)} species")
    per = batch_size // len(species)
    shuffled = {
        s: np.random.default_rng([seed, epoch, s]).permutation(pools[s]) for s in species
    }
    n_batches = min(len(p) for p in shuffled.values()) // per
    for i in range(n_batches):
        yield {s: shuffled[s][i * per:(i + 1) * per] for s in species}


def l2_penalty(model: ActivityNet) -> Optional[Tensor]:
    """Sum of squares of the decay-eligible parameters (conv/FC weights)."""
    decay = set(model.decay_param_paths())
    total = None
    for path, p in model.named_parameters():
        if path not in decay:
            continue
        term = ops.sum_all(ops.mul(p, p))
        total = term if total is None else ops.add(total, term)
    return total


def train_step(model: ActivityNet, optimizer: Adam, batch: Dict[int, Tensor],
               labels: Dict[int, np.ndarray], class_weights: Dict[int, np.ndarray],
               cfg: TrainConfig, lr: float) -> Tuple[float, Dict[int, float], Dict[int, int]]:
    """One optimizer step on a balanced batch; returns loss and hit counts."""
    model.train()
    logits = model.forward(batch)
    losses = {
        s: focal_loss(logits[s], labels[s], class_weights[s], cfg.focal_gamma)
        for s in sorted(batch)
    }
    task = species_average(losses, expected_species=sorted(batch))
    objective = task
    if cfg.weight_decay > 0.0:
        objective = ops.add(objective, ops.mul(l2_penalty(model), 0.5 * cfg.weight_decay))
    model.zero_grad()
    backward(objective)
    optimizer.step(lr)
    correct = {
        s: int((np.argmax(logits[s].data, axis=1) == labels[s]).sum()) for s in batch
    }
    return float(objective.data), {s: float(l.data) for s, l in losses.items()}, correct


def evaluate_split(model: ActivityNet, split: Split, class_weights: Dict[int, np.ndarray],
                   focal_gamma: float, chunk: int = 512,
                   ) -> Dict[int, Tuple[float, float, np.ndarray]]:
    """Inference-mode (accuracy, loss, predictions) per species."""
    out = {}
    model.eval()
    for s in sorted(split):
        windows, labels = split[s]
        logit_parts = []
        with no_grad():
            for lo in range(0, len(windows), chunk):
                part = windows[lo:lo + chunk].reshape(-1, 3, 1, windows.shape[-1])
                feats = model.trunk_forward(Tensor(part), s, update_stats=False)
                logit_parts.append(model.heads[s].forward(feats).data)
        logits = np.concatenate(logit_parts) if logit_parts else np.zeros((0, 1))
        preds = np.argmax(logits, axis=1)
        accuracy = float((preds == labels).mean()) if len(labels) else 0.0
        loss = float(focal_loss(Tensor(logits), labels, class_weights[s], focal_gamma).data) \
            if len(labels) else 0.0
        out[s] = (accuracy, loss, preds)
    return out


@dataclass
class TrainResult:
    best_state: Dict[str, np.ndarray]
    best_epoch: int
    best_val_accuracy: float
    curves: List[dict] = field(default_factory=list)
    standardizer: ChannelStandardizer = None
    class_weights: Dict[int, np.ndarray] = field(default_factory=dict)


def _first_nonfinite(model: ActivityNet) -> str:
    for path, p in model.named_parameters():
        if not np.all(np.isfinite(p.data)):
            return f"parameter {path}"
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            return f"gradient of {path}"
    return "loss only"


def train(model: ActivityNet, train_split: Split, val_split: Split,
          cfg: TrainConfig) -> TrainResult:
    """Run the full schedule and return the best-validation snapshot + curves."""
    species = sorted(train_split)
    if species != model.species:
        raise ValueError(f"training data covers species {species}, model expects {model.species}")
    batch_size = cfg.resolved_batch_size(len(species))

    if cfg.standardize:
        standardizer = ChannelStandardizer.fit([train_split[s][0] for s in species])
    else:
        standardizer = ChannelStandardizer.identity()
    train_data = {s: (standardizer.apply(train_split[s][0]), np.asarray(train_split[s][1]))
                  for s in species}
    val_data = {s: (standardizer.apply(val_split[s][0]), np.asarray(val_split[s][1]))
                for s in species}

    class_weights = {}
    for s in species:
        k = model.cfg.species_classes[s]
        counts = np.bincount(train_data[s][1], minlength=k)
        class_weights[s] = effective_number_weights(counts, cfg.cb_beta)

    optimizer = Adam(model.named_parameters(), beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
                     eps=cfg.adam_eps)
    pools = {s: np.arange(len(train_data[s][1])) for s in species}
    target_len = model.cfg.input_len

    result = TrainResult(best_state={}, best_epoch=-1, best_val_accuracy=-1.0,
                         standardizer=standardizer, class_weights=class_weights)
    for epoch in range(cfg.epochs):
        lr = step_decay_lr(cfg.lr, cfg.lr_decay_factor, cfg.lr_decay_every, epoch)
        loss_sums = {s: 0.0 for s in species}
        hit_sums = {s: 0 for s in species}
        seen = {s: 0 for s in species}
        for batch_index, index_batch in enumerate(
                make_batches(pools, batch_size, cfg.seed, epoch)):
            tensors = {}
            labels = {}
            for s, idx in index_batch.items():
                windows, lab = train_data[s]
                tensors[s] = Tensor(windows[idx].reshape(-1, 3, 1, target_len))
                labels[s] = lab[idx]
            total, per_species, correct = train_step(
                model, optimizer, tensors, labels, class_weights, cfg, lr)
            if not np.isfinite(total):
                raise TrainingDiverged(epoch, batch_index, _first_nonfinite(model))
            for s in index_batch:
                loss_sums[s] += per_species[s]
                hit_sums[s] += correct[s]
                seen[s] += len(index_batch[s])

        val_stats = evaluate_split(model, val_data, class_weights, cfg.focal_gamma)
        n_batches = max(1, seen[species[0]] // (batch_size // len(species)))
        for s in species:
            train_acc = hit_sums[s] / seen[s] if seen[s] else 0.0
            result.curves.append({"epoch": epoch, "species": s, "split": "train",
                                  "accuracy": train_acc,
                                  "loss": loss_sums[s] / n_batches if seen[s] else 0.0})
            result.curves.append({"epoch": epoch, "species": s, "split": "val",
                                  "accuracy": val_stats[s][0], "loss": val_stats[s][1]})
        mean_val = float(np.mean([val_stats[s][0] for s in species]))
        if mean_val > result.best_val_accuracy:
            result.best_val_accuracy = mean_val
            result.best_epoch = epoch
            result.best_state = model.snapshot()
    if result.best_epoch >= 0:
        model.load_state(result.best_state)
    return result
