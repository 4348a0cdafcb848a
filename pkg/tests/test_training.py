"""Batching, equalization, the training loop and its determinism contract."""

import numpy as np
import pytest

from conftest import quick_experiment_cfg, small_synthetic_dataset, tiny_model_cfg
from herdnet.autodiff import Tensor, backward
from herdnet.config import TrainConfig
from herdnet.losses import focal_loss
from herdnet.model import build_model
from herdnet.optim import Adam
from herdnet.train import (TrainingDiverged, equalize_species, l2_penalty, make_batches,
                           train, train_step)


def split_from(dataset, species, indices=None):
    out = {}
    for s in species:
        ss = dataset.species[s]
        idx = np.arange(len(ss)) if indices is None else indices[s]
        out[s] = (ss.data[idx], ss.labels[idx])
    return out


class TestEqualize:
    def test_downsamples_to_smallest(self, rng):
        pools = {0: np.arange(876), 1: np.arange(1497), 2: np.arange(104)}
        labels = {s: rng.integers(0, 3, len(p)) for s, p in pools.items()}
        out = equalize_species(pools, labels, seed=0)
        assert {s: len(p) for s, p in out.items()} == {0: 104, 1: 104, 2: 104}

    def test_equal_sizes_keep_membership(self, rng):
        pools = {0: rng.permutation(50), 1: rng.permutation(50)}
        labels = {s: rng.integers(0, 2, 50) for s in pools}
        out = equalize_species(pools, labels, seed=9)
        for s in pools:
            assert np.array_equal(np.sort(out[s]), np.sort(pools[s]))

    def test_stratified_within_one_sample(self):
        # 80/20 two-class species downsampled to 100 stays 80/20 (+-1)
        pools = {0: np.arange(1000), 1: np.arange(100)}
        labels = {0: np.array([0] * 800 + [1] * 200), 1: np.zeros(100, dtype=int)}
        out = equalize_species(pools, labels, seed=1)
        kept = labels[0][out[0]]
        assert abs((kept == 0).sum() - 80) <= 1
        assert abs((kept == 1).sum() - 20) <= 1

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            equalize_species({0: np.arange(3), 1: np.arange(0)},
                             {0: np.zeros(3, int), 1: np.zeros(0, int)}, seed=0)


class TestMakeBatches:
    def test_indivisible_batch_rejected(self):
        pools = {s: np.arange(100) for s in range(3)}
        with pytest.raises(ValueError, match="divisible"):
            list(make_batches(pools, 256, seed=0, epoch=0))

    def test_default_batch_resolves_to_255_for_three_species(self):
        assert TrainConfig().resolved_batch_size(3) == 255
        with pytest.raises(ValueError, match="divisible"):
            TrainConfig(batch_size=256).resolved_batch_size(3)

    def test_balanced_batches(self):
        pools = {s: np.arange(12) for s in range(3)}
        batches = list(make_batches(pools, 6, seed=0, epoch=0))
        assert len(batches) == 6
        for batch in batches:
            assert {s: len(idx) for s, idx in batch.items()} == {0: 2, 1: 2, 2: 2}

    def test_epoch_ends_at_shortest_pool(self):
        pools = {0: np.arange(20), 1: np.arange(7)}
        batches = list(make_batches(pools, 4, seed=0, epoch=0))
        assert len(batches) == 3  # 7 // 2

    def test_same_seed_same_sequence(self):
        pools = {s: np.arange(30) for s in range(2)}
        a = list(make_batches(pools, 6, seed=4, epoch=2))
        b = list(make_batches(pools, 6, seed=4, epoch=2))
        assert all(np.array_equal(x[s], y[s]) for x, y in zip(a, b) for s in x)
        c = list(make_batches(pools, 6, seed=4, epoch=3))
        assert any(not np.array_equal(x[s], y[s]) for x, y in zip(a, c) for s in x)


class TestDecayAudit:
    def test_penalty_touches_only_conv_and_fc_weights(self):
        model = build_model(tiny_model_cfg(), seed=0)
        decay = set(model.decay_param_paths())
        for path in decay:
            leaf = path.rsplit(".", 1)[-1]
            assert leaf in ("weight", "up", "down", "kernel")
        for path, _ in model.named_parameters():
            leaf = path.rsplit(".", 1)[-1]
            if leaf in ("bias", "gamma", "beta"):
                assert path not in decay

    def test_penalty_gradients_stay_off_bn_and_biases(self):
        model = build_model(tiny_model_cfg(), seed=0)
        model.zero_grad()
        backward(l2_penalty(model))
        decay = set(model.decay_param_paths())
        for path, p in model.named_parameters():
            if path in decay:
                assert p.grad is not None
            else:
                assert p.grad is None, path


class TestTrainStep:
    def test_single_species_step_leaves_other_species_untouched(self, rng):
        model = build_model(tiny_model_cfg(), seed=1)
        optimizer = Adam(model.named_parameters())
        cfg = TrainConfig(weight_decay=0.0, focal_gamma=2.0, cb_beta=0.0)
        before = {p: t.data.copy() for p, t in model.named_parameters()}
        batch = {0: Tensor(rng.uniform(-1, 1, (4, 3, 1, 12)))}
        labels = {0: rng.integers(0, 2, 4)}
        train_step(model, optimizer, batch, labels, {0: np.ones(2)}, cfg, lr=1e-3)
        other = set(model.species_param_paths(1))
        for path, t in model.named_parameters():
            if path in other:
                assert np.array_equal(t.data, before[path]), path
            elif path.startswith("stem.conv"):
                assert not np.array_equal(t.data, before[path]), path


class TestTrainLoop:
    def test_smoke_two_epochs_emits_curves(self):
        dataset, _ = small_synthetic_dataset(samples_per_class=10)
        cfg = quick_experiment_cfg(epochs=2)
        model_cfg = tiny_model_cfg(
            species_classes=dataset.species_classes(), input_len=50,
            widths=cfg.model.widths, fc_dim=cfg.model.fc_dim, rank=cfg.model.rank)
        model = build_model(model_cfg, seed=0)
        split = split_from(dataset, model.species)
        result = train(model, split, split, cfg.train)
        for s in model.species:
            for split_name in ("train", "val"):
                points = [r for r in result.curves
                          if r["species"] == s and r["split"] == split_name]
                assert len(points) == 2

    def test_best_checkpoint_tracks_peak_mean_val_accuracy(self):
        dataset, _ = small_synthetic_dataset(samples_per_class=10)
        cfg = quick_experiment_cfg(epochs=4, lr=3e-3)
        model_cfg = tiny_model_cfg(
            species_classes=dataset.species_classes(), input_len=50,
            widths=cfg.model.widths, fc_dim=cfg.model.fc_dim, rank=cfg.model.rank)
        model = build_model(model_cfg, seed=0)
        split = split_from(dataset, model.species)
        result = train(model, split, split, cfg.train)
        per_epoch = {}
        for row in result.curves:
            if row["split"] == "val":
                per_epoch.setdefault(row["epoch"], []).append(row["accuracy"])
        means = [float(np.mean(per_epoch[e])) for e in sorted(per_epoch)]
        assert result.best_epoch == int(np.argmax(means))
        assert result.best_val_accuracy == pytest.approx(max(means))

    def test_seeded_rerun_bit_identical(self):
        dataset, _ = small_synthetic_dataset(samples_per_class=8)
        cfg = quick_experiment_cfg(epochs=2, seed=5)

        def run():
            model_cfg = tiny_model_cfg(
                species_classes=dataset.species_classes(), input_len=50,
                widths=cfg.model.widths, fc_dim=cfg.model.fc_dim, rank=cfg.model.rank)
            model = build_model(model_cfg, seed=cfg.train.seed)
            split = split_from(dataset, model.species)
            result = train(model, split, split, cfg.train)
            return model.state_arrays(), result.curves

        state_a, curves_a = run()
        state_b, curves_b = run()
        assert curves_a == curves_b
        for key in state_a:
            assert np.array_equal(state_a[key], state_b[key]), key

    def test_nan_loss_aborts_with_location(self):
        dataset, _ = small_synthetic_dataset(samples_per_class=8)
        cfg = quick_experiment_cfg(epochs=1, lr=1e200, weight_decay=0.0)
        model_cfg = tiny_model_cfg(
            species_classes=dataset.species_classes(), input_len=50,
            widths=cfg.model.widths, fc_dim=cfg.model.fc_dim, rank=cfg.model.rank)
        model = build_model(model_cfg, seed=0)
        split = split_from(dataset, model.species)
        with pytest.raises(TrainingDiverged, match="epoch 0"):
            train(model, split, split, cfg.train)
