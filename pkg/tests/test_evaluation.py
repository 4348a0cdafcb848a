"""Metrics arithmetic, fold stratification, rotation coverage, CV determinism."""

import json

import numpy as np
import pytest

from conftest import quick_experiment_cfg, small_synthetic_dataset
from herdnet.evaluate import (FoldPlan, bn_stats_export, compute_metrics, plan_folds,
                              run_cv, stratified_folds)
from herdnet.model import build_model
from conftest import tiny_model_cfg


class TestComputeMetrics:
    def test_perfect_predictions(self):
        entry = compute_metrics([0, 1, 2, 0], [0, 1, 2, 0], 3)
        assert entry.accuracy == entry.precision == entry.recall == entry.f1 == 1.0
        assert np.array_equal(np.diag(entry.confusion), [2, 1, 1])
        assert entry.confusion.sum() == 4

    def test_hand_worked_example(self):
        entry = compute_metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert entry.accuracy == pytest.approx(0.75)
        assert entry.per_class_precision[0] == pytest.approx(1.0)
        assert entry.per_class_recall[0] == pytest.approx(0.5)
        assert entry.per_class_precision[1] == pytest.approx(2.0 / 3.0)
        assert entry.per_class_recall[1] == pytest.approx(1.0)
        assert entry.f1 == pytest.approx((2.0 / 3.0 + 4.0 / 5.0) / 2.0)

    def test_single_class_collapse_on_balanced_truth(self):
        k = 4
        y_true = np.repeat(np.arange(k), 5)
        y_pred = np.zeros_like(y_true)
        entry = compute_metrics(y_true, y_pred, k)
        assert entry.accuracy == pytest.approx(1.0 / k)
        assert entry.zero_division_events > 0
        assert np.isfinite(entry.f1)

    def test_accuracy_equals_trace_over_total(self, rng):
        y_true = rng.integers(0, 5, 200)
        y_pred = rng.integers(0, 5, 200)
        entry = compute_metrics(y_true, y_pred, 5)
        assert entry.accuracy == pytest.approx(np.trace(entry.confusion) / 200)
        assert 0.0 <= entry.f1 <= 1.0

    def test_macro_aggregates_invariant_under_relabelling(self, rng):
        y_true = rng.integers(0, 4, 120)
        y_pred = rng.integers(0, 4, 120)
        base = compute_metrics(y_true, y_pred, 4)
        perm = rng.permutation(4)
        mapped = compute_metrics(perm[y_true], perm[y_pred], 4)
        assert mapped.accuracy == pytest.approx(base.accuracy)
        assert mapped.precision == pytest.approx(base.precision)
        assert mapped.recall == pytest.approx(base.recall)
        assert mapped.f1 == pytest.approx(base.f1)
        # permuting class ids permutes confusion rows/columns consistently
        assert np.array_equal(base.confusion, mapped.confusion[perm][:, perm])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            compute_metrics([0, 1], [0, 2], 2)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            compute_metrics([0, 1], [0], 2)


class TestStratifiedFolds:
    def test_ten_samples_one_class_gives_folds_of_two(self):
        folds = stratified_folds(np.zeros(10, dtype=int), 5, seed=0)
        assert [len(f) for f in folds] == [2] * 5

    def test_class_smaller_than_fold_count_rejected(self):
        labels = np.array([0] * 4 + [1] * 10)
        with pytest.raises(ValueError, match="class 0"):
            stratified_folds(labels, 5, seed=0)

    def test_mixed_class_stratification(self):
        labels = np.array([0] * 50 + [1] * 30 + [2] * 20)
        folds = stratified_folds(labels, 5, seed=3)
        for fold in folds:
            fold_labels = labels[fold]
            assert (fold_labels == 0).sum() == 10
            assert (fold_labels == 1).sum() == 6
            assert (fold_labels == 2).sum() == 4

    def test_partition_properties_over_random_mixes(self, rng):
        for trial in range(10):
            k = int(rng.integers(2, 6))
            counts = rng.integers(5, 40, k)
            labels = np.repeat(np.arange(k), counts)
            seed = int(rng.integers(0, 1 << 31))
            folds = stratified_folds(labels, 5, seed=seed)
            joined = np.concatenate(folds)
            assert len(joined) == len(labels)
            assert len(np.unique(joined)) == len(labels)  # disjoint + exhaustive
            for c in range(k):
                per_fold = [(labels[f] == c).sum() for f in folds]
                assert max(per_fold) - min(per_fold) <= 1

    def test_deterministic_given_seed(self):
        labels = np.tile(np.arange(3), 20)
        a = stratified_folds(labels, 5, seed=12)
        b = stratified_folds(labels, 5, seed=12)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestFoldPlanRotation:
    def _plan(self):
        labels = np.tile(np.arange(2), 15)
        return FoldPlan({0: stratified_folds(labels, 5, seed=1)})

    def test_schedule_assignment(self):
        plan = self._plan()
        for i in range(5):
            train_idx, val_idx, test_idx = plan.rotation(i)[0]
            assert np.array_equal(test_idx, plan.folds[0][i])
            assert np.array_equal(val_idx, plan.folds[0][(i + 1) % 5])
            assert len(train_idx) + len(val_idx) + len(test_idx) == 30
            assert not set(train_idx) & set(val_idx)
            assert not set(train_idx) & set(test_idx)

    def test_every_window_tested_exactly_once(self):
        plan = self._plan()
        tested = np.concatenate([plan.rotation(i)[0][2] for i in range(5)])
        assert sorted(tested.tolist()) == list(range(30))


class TestRunCv:
    @pytest.fixture(scope="class")
    def dataset(self):
        ds, _ = small_synthetic_dataset(samples_per_class=10)
        return ds

    def test_five_rotations_cover_every_window(self, dataset):
        cfg = quick_experiment_cfg(epochs=1)
        plan = plan_folds(dataset, 5, cfg.train.seed)
        for s, folds in plan.folds.items():
            tested = np.concatenate(folds)
            assert sorted(tested.tolist()) == list(range(len(dataset.species[s])))

    def test_cross_validation_aggregates_and_determinism(self, dataset):
        cfg = quick_experiment_cfg(epochs=1)
        cfg.eval.cross_validate = True
        cfg.eval.folds = 5
        r1 = run_cv(dataset, cfg)
        r2 = run_cv(dataset, cfg)
        assert len(r1.rotations) == 5
        assert json.dumps(r1.report(), sort_keys=True) == json.dumps(r2.report(),
                                                                     sort_keys=True)

    def test_report_shape(self, dataset):
        cfg = quick_experiment_cfg(epochs=1)
        report = run_cv(dataset, cfg).report()
        for s in dataset.species:
            entry = report["species"][str(s)]
            assert set(entry["aggregate"]) == {"accuracy", "precision", "recall", "f1"}
            assert len(entry["rotations"]) == 1


class TestBnStatsExport:
    def test_fresh_model_sits_at_zero_one(self):
        rows = bn_stats_export(build_model(tiny_model_cfg(), seed=0))
        for row in rows:
            assert row["mean_of_running_means"] == 0.0
            assert row["mean_of_running_vars"] == 1.0

    def test_training_one_species_moves_only_its_rows(self, rng):
        model = build_model(tiny_model_cfg(), seed=0)
        model.train()
        from herdnet.autodiff import Tensor
        for _ in range(20):
            model.trunk_forward(Tensor(rng.uniform(-1, 1, (4, 3, 1, 12))), 0)
        rows = bn_stats_export(model)
        for row in rows:
            if row["species"] == "1":
                assert row["mean_of_running_means"] == 0.0
                assert row["mean_of_running_vars"] == 1.0
            if row["species"] == "0" and row["layer"] != "stem.bn":
                assert row["mean_of_running_vars"] != 1.0
