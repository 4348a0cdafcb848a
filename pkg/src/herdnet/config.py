"""Declarative run configuration.

One JSON file describes a whole run (architecture, loss, schedule, folds,
data fraction, ablation flags, seed); the CLI merges overrides on top. All
defaults here are the library defaults; experiment scripts shrink them for
desk-scale runs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple


@dataclass
class ModelConfig:
    species_classes: Dict[int, int] = field(default_factory=dict)  # species id -> class count
    in_channels: int = 3
    input_len: int = 50
    widths: Tuple[int, ...] = (16, 32, 64, 128)   # stem width followed by block widths
    fc_dim: int = 64
    rank: int = 12
    init_sigma: float = 0.02
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    activation: str = "relu"
    use_species_conv: bool = True    # per-species low-rank conv branches
    use_species_bn: bool = True      # per-species batch-norm states
    full_rank_branches: bool = False  # ablation: species branches at full rank

    def __post_init__(self):
        self.species_classes = {int(k): int(v) for k, v in dict(self.species_classes).items()}
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 2:
            raise ValueError("widths needs a stem width plus at least one block width")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: Optional[int] = None   # None: largest size <= 256 divisible by the species count
    lr: float = 1e-4
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 20
    weight_decay: float = 0.06
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    focal_gamma: float = 2.0
    cb_beta: float = 0.999
    seed: int = 0
    data_fraction: float = 1.0
    standardize: bool = True

    def resolved_batch_size(self, n_species: int) -> int:
        if self.batch_size is None:
            size = 256 - (256 % n_species)
            return size if size else n_species
        if self.batch_size % n_species != 0:
            raise ValueError(
                f"batch_size {self.batch_size} is not divisible by the species count "
                f"{n_species}; pick a divisible size (e.g. {self.batch_size - self.batch_size % n_species})")
        return self.batch_size


@dataclass
class EvalConfig:
    folds: int = 5
    cross_validate: bool = True     # all fold rotations vs. the first split only
    average: str = "macro"          # macro | weighted


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    species: Optional[List[int]] = None   # restrict the run to these species ids

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"]["widths"] = list(self.model.widths)
        d["model"]["species_classes"] = {str(k): v for k, v in self.model.species_classes.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {"model", "train", "eval", "species"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        model = _load_section(ModelConfig, d.get("model", {}))
        train = _load_section(TrainConfig, d.get("train", {}))
        eval_ = _load_section(EvalConfig, d.get("eval", {}))
        species = d.get("species")
        if species is not None:
            species = [int(s) for s in species]
        return cls(model=model, train=train, eval=eval_, species=species)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def _load_section(cls, d: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)
