"""Metrics, stratified folds and the cross-validation driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import ExperimentConfig, ModelConfig
from .data import ChannelStandardizer, WindowDataset
from .model import ActivityNet, build_model
from .synthetic import scarcity_indices
from .train import TrainResult, equalize_species, evaluate_split, train


@dataclass
class MetricsEntry:
    """Per-species metrics over one evaluated split."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_precision: List[float]
    per_class_recall: List[float]
    per_class_f1: List[float]
    support: List[int]
    confusion: np.ndarray
    zero_division_events: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "per_class_f1": self.per_class_f1,
            "support": self.support,
            "confusion": self.confusion.tolist(),
            "zero_division_events": self.zero_division_events,
        }


def compute_metrics(y_true, y_pred, n_classes: int, average: str = "macro") -> MetricsEntry:
    """Accuracy, averaged precision/recall/F1 and the confusion matrix.

    Rows of the confusion matrix are true classes, columns predictions.
    0/0 precision or recall is defined as 0 and counted as a zero-division
    event rather than propagating NaN through tiny runs.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label arrays differ in length: {y_true.shape} vs {y_pred.shape}")
    if average not in ("macro", "weighted"):
        raise ValueError(f"unknown average {average!r}")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} label out of range [0, {n_classes})")

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0

    diag = np.diag(confusion).astype(np.float64)
    pred_sums = confusion.sum(axis=0).astype(np.float64)
    true_sums = confusion.sum(axis=1).astype(np.float64)
    zero_events = int((pred_sums == 0).sum() + (true_sums == 0).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_sums > 0, diag / pred_sums, 0.0)
        recall = np.where(true_sums > 0, diag / true_sums, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    zero_events += int(((pr == 0)).sum())

    if average == "weighted":
        weights = true_sums / total if total else np.zeros(n_classes)
    else:
        weights = np.full(n_classes, 1.0 / n_classes)
    return MetricsEntry(
        accuracy=accuracy,
        precision=float((precision * weights).sum()),
        recall=float((recall * weights).sum()),
        f1=float((f1 * weights).sum()),
        per_class_precision=[float(v) for v in precision],
        per_class_recall=[float(v) for v in recall],
        per_class_f1=[float(v) for v in f1],
        support=[int(v) for v in true_sums],
        confusion=confusion,
        zero_division_events=zero_events,
    )


def stratified_folds(labels, n_folds: int, seed: int) -> List[np.ndarray]:
    """Partition positions into class-proportional folds (counts within +-1).

    Each class is shuffled with the seeded stream and dealt round-robin, so
    the folds are disjoint, exhaustive and deterministic for a given seed.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    folds: List[List[int]] = [[] for _ in range(n_folds)]
    for c in np.unique(labels):
        positions = np.flatnonzero(labels == c)
        if len(positions) < n_folds:
            raise ValueError(
                f"class {int(c)} has only {len(positions)} samples, needs >= {n_folds} "
                f"for {n_folds}-fold stratification")
        shuffled = rng.permutation(positions)
        for j in range(n_folds):
            folds[j].extend(shuffled[j::n_folds].tolist())
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


@dataclass
class FoldPlan:
    """Per-species folds plus the rotation schedule (test i, val i+1, rest train)."""

    folds: Dict[int, List[np.ndarray]]

    @property
    def n_folds(self) -> int:
        return len(next(iter(self.folds.values())))

    def rotation(self, i: int) -> Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """species -> (train indices, val indices, test indices) for round i."""
        k = self.n_folds
        out = {}
        for s, folds in self.folds.items():
            test = folds[i % k]
            val = folds[(i + 1) % k]
            train_parts = [folds[j] for j in range(k) if j not in (i % k, (i + 1) % k)]
            out[s] = (np.concatenate(train_parts), val, test)
        return out


def plan_folds(dataset: WindowDataset, n_folds: int, seed: int,
               species: Optional[List[int]] = None) -> FoldPlan:
    chosen = sorted(species) if species else sorted(dataset.species)
    folds = {}
    for s in chosen:
        try:
            folds[s] = stratified_folds(dataset.species[s].labels, n_folds, seed)
        except ValueError as err:
            raise ValueError(f"species {s} ({dataset.species[s].name}): {err}") from err
    return FoldPlan(folds)


@dataclass
class RotationOutcome:
    rotation: int
    metrics: Dict[int, MetricsEntry]
    train_result: TrainResult
    model_state: Dict[str, np.ndarray]
    standardizer: ChannelStandardizer
    bn_stats: List[dict] = field(default_factory=list)


@dataclass
class CvResult:
    config: dict
    species_names: Dict[int, str]
    class_names: Dict[int, List[str]] = field(default_factory=dict)
    model_config: Optional[ModelConfig] = None
    rotations: List[RotationOutcome] = field(default_factory=list)

    def report(self) -> dict:
        """JSON-ready aggregate: per-rotation metrics plus mean and std."""
        species = sorted(self.species_names)
        out = {"config": self.config, "species": {}}
        for s in species:
            entries = [r.metrics[s] for r in self.rotations]
            rows = [e.to_dict() for e in entries]
            agg = {}
            for metric in ("accuracy", "precision", "recall", "f1"):
                values = np.array([getattr(e, metric) for e in entries])
                agg[metric] = {"mean": float(values.mean()), "std": float(values.std())}
            out["species"][str(s)] = {
                "name": self.species_names[s],
                "rotations": rows,
                "aggregate": agg,
            }
        return out


def _model_config_for(cfg: ExperimentConfig, dataset: WindowDataset,
                      species: List[int]) -> ModelConfig:
    kwargs = {k: v for k, v in vars(cfg.model).items()}
    kwargs["species_classes"] = {s: len(dataset.species[s].class_names) for s in species}
    kwargs["input_len"] = dataset.target_len
    return ModelConfig(**kwargs)


def run_cv(dataset: WindowDataset, cfg: ExperimentConfig) -> CvResult:
    """Train/evaluate over fold rotations per the configured protocol.

    Scarcity (data_fraction) and species equalization are re-applied per
    rotation on the training folds only; validation and test folds are never
    subsampled.
    """
    species = sorted(cfg.species) if cfg.species else sorted(dataset.species)
    missing = [s for s in species if s not in dataset.species]
    if missing:
        raise ValueError(f"dataset lacks species {missing}")
    plan = plan_folds(dataset, cfg.eval.folds, cfg.train.seed, species)
    model_cfg = _model_config_for(cfg, dataset, species)
    rotations = range(cfg.eval.folds) if cfg.eval.cross_validate else [0]

    result = CvResult(config=cfg.to_dict(), model_config=model_cfg,
                      species_names={s: dataset.species[s].name for s in species},
                      class_names={s: list(dataset.species[s].class_names) for s in species})
    for rotation in rotations:
        split = plan.rotation(rotation)
        train_pools = {}
        pool_labels = {}
        for s in species:
            train_idx = split[s][0]
            labels = dataset.species[s].labels[train_idx]
            if cfg.train.data_fraction < 1.0:
                keep = scarcity_indices(labels, cfg.train.data_fraction, cfg.train.seed)
                train_idx = train_idx[keep]
                labels = dataset.species[s].labels[train_idx]
            train_pools[s] = train_idx
            pool_labels[s] = labels
        train_pools = equalize_species(train_pools, pool_labels, cfg.train.seed)

        def materialize(indices_by_species):
            return {
                s: (dataset.species[s].data[idx], dataset.species[s].labels[idx])
                for s, idx in indices_by_species.items()
            }

        train_split = materialize(train_pools)
        val_split = materialize({s: split[s][1] for s in species})
        test_split = materialize({s: split[s][2] for s in species})

        model = build_model(model_cfg, seed=cfg.train.seed + rotation)
        outcome = train(model, train_split, val_split, cfg.train)

        test_data = {s: (outcome.standardizer.apply(test_split[s][0]), test_split[s][1])
                     for s in species}
        stats = evaluate_split(model, test_data, outcome.class_weights, cfg.train.focal_gamma)
        metrics = {
            s: compute_metrics(test_data[s][1], stats[s][2],
                               model_cfg.species_classes[s], cfg.eval.average)
            for s in species
        }
        result.rotations.append(RotationOutcome(
            rotation=rotation, metrics=metrics, train_result=outcome,
            model_state=model.snapshot(), standardizer=outcome.standardizer,
            bn_stats=bn_stats_export(model)))
    return result


def bn_stats_export(model: ActivityNet) -> List[dict]:
    """Layer-wise averages of the running statistics, one row per (layer, species).

    Species whose distributions diverge show it here: their rows drift apart
    with depth while a fresh model sits at (0, 1) everywhere.
    """
    rows = []
    for layer_index, (name, layer) in enumerate(model.bn_layers()):
        states = getattr(layer, "states", None)
        if states is None:
            rows.append({"layer_index": layer_index, "layer": name, "species": "shared",
                         "mean_of_running_means": float(layer.running_mean.mean()),
                         "mean_of_running_vars": float(layer.running_var.mean())})
        else:
            for s in sorted(states):
                state = states[s]
                rows.append({"layer_index": layer_index, "layer": name, "species": str(s),
                             "mean_of_running_means": float(state.running_mean.mean()),
                             "mean_of_running_vars": float(state.running_var.mean())})
    return rows
