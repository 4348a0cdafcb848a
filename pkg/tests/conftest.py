import numpy as np
import pytest

from herdnet.config import EvalConfig, ExperimentConfig, ModelConfig, TrainConfig
from herdnet.ingest import prepare_dataset
from herdnet.synthetic import SyntheticSpec, SyntheticSpecies, generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_model_cfg(**overrides) -> ModelConfig:
    """Small 2-species architecture; fast enough for exhaustive checks."""
    kwargs = dict(
        species_classes={0: 2, 1: 3},
        input_len=12,
        widths=(3, 4),
        fc_dim=5,
        rank=2,
        init_sigma=0.2,
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def small_synthetic_dataset(samples_per_class=12, seed=3, noise_sigma=0.3):
    """Three tiny species at the mixed sampling rates."""
    spec = SyntheticSpec(
        species=[
            SyntheticSpecies(0, "alpha", 100.0, ["burst", "sway", "tremor"],
                             amplitude=1.3, freq_scale=1.2),
            SyntheticSpecies(1, "beta", 25.0, ["burst", "sway", "tremor"],
                             rotation_deg=-40.0),
            SyntheticSpecies(2, "gamma", 12.5, ["burst", "sway"],
                             amplitude=0.6, rotation_deg=35.0),
        ],
        samples_per_class=samples_per_class,
        noise_sigma=noise_sigma,
        seed=seed,
    )
    recordings, meta = generate(spec)
    dataset, report = prepare_dataset(recordings, meta, target_len=50)
    return dataset, report


def quick_experiment_cfg(**train_overrides) -> ExperimentConfig:
    train_kwargs = dict(epochs=2, batch_size=12, lr=1e-3, seed=0, weight_decay=0.01)
    train_kwargs.update(train_overrides)
    return ExperimentConfig(
        model=ModelConfig(widths=(6, 8), fc_dim=8, rank=2),
        train=TrainConfig(**train_kwargs),
        eval=EvalConfig(folds=4, cross_validate=False),
    )
