"""Experiment grids: baseline comparison, ablations, rank and scarcity sweeps.

Grids rerun the cross-validation driver over config variations and pool the
per-rotation test metrics across seeds. The one-for-one baseline keeps the
same architecture with both species-specific mechanisms removed and trains
on a single species with the same per-species batch share, so the
comparison isolates the effect of joint multi-species training.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .data import WindowDataset
from .evaluate import CvResult, run_cv

METRICS = ("accuracy", "precision", "recall", "f1")


def with_overrides(cfg: ExperimentConfig, *, seed: Optional[int] = None,
                   rank: Optional[int] = None, fraction: Optional[float] = None,
                   use_species_conv: Optional[bool] = None,
                   use_species_bn: Optional[bool] = None,
                   full_rank_branches: Optional[bool] = None,
                   species: Optional[List[int]] = None,
                   batch_size: Optional[int] = None) -> ExperimentConfig:
    model_kw = {}
    if rank is not None:
        model_kw["rank"] = rank
    if use_species_conv is not None:
        model_kw["use_species_conv"] = use_species_conv
    if use_species_bn is not None:
        model_kw["use_species_bn"] = use_species_bn
    if full_rank_branches is not None:
        model_kw["full_rank_branches"] = full_rank_branches
    train_kw = {}
    if seed is not None:
        train_kw["seed"] = seed
    if fraction is not None:
        train_kw["data_fraction"] = fraction
    if batch_size is not None:
        train_kw["batch_size"] = batch_size
    return ExperimentConfig(
        model=replace(cfg.model, **model_kw) if model_kw else cfg.model,
        train=replace(cfg.train, **train_kw) if train_kw else cfg.train,
        eval=cfg.eval,
        species=species if species is not None else cfg.species,
    )


def single_net_config(cfg: ExperimentConfig, species_id: int,
                      joint_species_count: int) -> ExperimentConfig:
    """One-for-one baseline: shared-only architecture on one species.

    The batch size becomes the per-species share of the joint batch so both
    setups see the same number of that species' windows per step.
    """
    joint_batch = cfg.train.resolved_batch_size(joint_species_count)
    return with_overrides(cfg, use_species_conv=False, use_species_bn=False,
                          species=[species_id],
                          batch_size=joint_batch // joint_species_count)


def collect_metrics(results: Iterable[CvResult]) -> Dict[int, Dict[str, List[float]]]:
    """Pool per-rotation metric values per species across runs."""
    pooled: Dict[int, Dict[str, List[float]]] = {}
    for cv in results:
        for outcome in cv.rotations:
            for s, entry in outcome.metrics.items():
                slot = pooled.setdefault(s, {m: [] for m in METRICS})
                for m in METRICS:
                    slot[m].append(getattr(entry, m))
    return pooled


def sweep_rows(sweep_var: str, value, pooled: Dict[int, Dict[str, List[float]]],
               species_names: Dict[int, str]) -> List[dict]:
    rows = []
    for s in sorted(pooled):
        for metric in METRICS:
            values = np.array(pooled[s][metric])
            rows.append({"sweep_var": sweep_var, "value": value,
                         "species": species_names.get(s, str(s)),
                         "metric": metric,
                         "mean": float(values.mean()), "std": float(values.std())})
    return rows


def _seeded_runs(dataset: WindowDataset, cfg: ExperimentConfig,
                 seeds: Sequence[int]) -> List[CvResult]:
    return [run_cv(dataset, with_overrides(cfg, seed=seed)) for seed in seeds]


def ablation_grid(dataset: WindowDataset, cfg: ExperimentConfig,
                  seeds: Sequence[int]) -> Dict[tuple, Dict[int, Dict[str, List[float]]]]:
    """Four configurations: species conv and species BN each on/off."""
    grid = {}
    for use_conv in (True, False):
        for use_bn in (True, False):
            variant = with_overrides(cfg, use_species_conv=use_conv, use_species_bn=use_bn)
            grid[(use_conv, use_bn)] = collect_metrics(_seeded_runs(dataset, variant, seeds))
    return grid


def rank_sweep(dataset: WindowDataset, cfg: ExperimentConfig, ranks: Sequence[int],
               include_full_rank: bool, seeds: Sequence[int],
               species_names: Dict[int, str]) -> List[dict]:
    rows = []
    for rank in ranks:
        pooled = collect_metrics(_seeded_runs(dataset, with_overrides(cfg, rank=rank), seeds))
        rows.extend(sweep_rows("rank", rank, pooled, species_names))
    if include_full_rank:
        variant = with_overrides(cfg, full_rank_branches=True)
        pooled = collect_metrics(_seeded_runs(dataset, variant, seeds))
        rows.extend(sweep_rows("rank", "frconv", pooled, species_names))
    return rows


def fraction_sweep(dataset: WindowDataset, cfg: ExperimentConfig,
                   fractions: Sequence[float], seeds: Sequence[int],
                   species_names: Dict[int, str],
                   include_single_net: bool = False) -> List[dict]:
    rows = []
    joint_count = len(cfg.species or sorted(dataset.species))
    species_ids = cfg.species or sorted(dataset.species)
    for fraction in fractions:
        frac_cfg = with_overrides(cfg, fraction=fraction)
        pooled = collect_metrics(_seeded_runs(dataset, frac_cfg, seeds))
        rows.extend(sweep_rows("fraction", fraction, pooled, species_names))
        if include_single_net:
            pooled_single: Dict[int, Dict[str, List[float]]] = {}
            for s in species_ids:
                base = single_net_config(frac_cfg, s, joint_count)
                pooled_single.update(collect_metrics(_seeded_runs(dataset, base, seeds)))
            rows.extend(sweep_rows("fraction-singlenet", fraction, pooled_single,
                                   species_names))
    return rows
