"""Generator determinism, rate handling and scarcity subsampling."""

import numpy as np
import pytest

from herdnet.data import window_recording
from herdnet.synthetic import (SyntheticSpec, SyntheticSpecies, default_spec, generate,
                               scarcity_indices, spec_from_dict)


class TestGenerate:
    def test_same_seed_bit_identical(self):
        spec = default_spec(samples_per_class=5, seed=11)
        a, _ = generate(spec)
        b, _ = generate(default_spec(samples_per_class=5, seed=11))
        assert len(a) == len(b)
        for ra, rb in zip(a, b):
            assert ra.subject_id == rb.subject_id
            assert np.array_equal(ra.channels, rb.channels)
            assert np.array_equal(ra.labels, rb.labels)

    def test_different_seed_differs(self):
        a, _ = generate(default_spec(samples_per_class=5, seed=1))
        b, _ = generate(default_spec(samples_per_class=5, seed=2))
        assert not np.array_equal(a[0].channels, b[0].channels)

    def test_rates_give_expected_window_lengths(self):
        recordings, _ = generate(default_spec(samples_per_class=4, seed=0))
        lengths = {}
        for rec in recordings:
            kept, _ = window_recording(rec)
            lengths.setdefault(rec.sampling_rate_hz, set()).update(
                w.shape[1] for w, _ in kept)
        assert lengths == {100.0: {200}, 25.0: {50}, 12.5: {25}}

    def test_zero_noise_windows_identical_up_to_species_transform(self):
        # same rate, rotation-only difference: windows must match after
        # applying the relative rotation
        spec = SyntheticSpec(
            species=[
                SyntheticSpecies(0, "a", 25.0, ["sway"], rotation_deg=0.0, subjects=1),
                SyntheticSpecies(1, "b", 25.0, ["sway"], rotation_deg=90.0, subjects=1),
            ],
            samples_per_class=3, noise_sigma=0.0, gravity=0.5, seed=4)
        recordings, _ = generate(spec)
        win_a, _ = window_recording(recordings[0])
        win_b, _ = window_recording(recordings[1])
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        for (wa, _), (wb, _) in zip(win_a, win_b):
            assert np.max(np.abs(rot @ wa - wb)) < 1e-12

    def test_validation_rejects_degenerate_specs(self):
        with pytest.raises(ValueError, match="at least one species"):
            generate(SyntheticSpec(species=[], samples_per_class=3))
        with pytest.raises(ValueError, match="no classes"):
            generate(SyntheticSpec(
                species=[SyntheticSpecies(0, "x", 25.0, [])], samples_per_class=3))
        with pytest.raises(ValueError, match="unknown motif"):
            generate(SyntheticSpec(
                species=[SyntheticSpecies(0, "x", 25.0, ["wiggle"])], samples_per_class=3))
        with pytest.raises(ValueError, match="shared"):
            generate(SyntheticSpec(
                species=[SyntheticSpecies(0, "x", 25.0, ["sway"]),
                         SyntheticSpecies(1, "y", 25.0, ["burst"])],
                samples_per_class=3))

    def test_spec_from_dict_round_trip(self):
        d = {
            "samples_per_class": 4, "noise_sigma": 0.2, "seed": 9,
            "species": [{"species_id": 0, "name": "a", "rate_hz": 25.0,
                         "motifs": ["sway", "burst"]},
                        {"species_id": 1, "name": "b", "rate_hz": 12.5,
                         "motifs": ["sway"], "amplitude": 0.5}],
        }
        spec = spec_from_dict(d)
        assert spec.species[1].amplitude == 0.5
        with pytest.raises(ValueError, match="unknown synthetic spec"):
            spec_from_dict({"species": [], "bogus": 1})


class TestScarcity:
    def test_full_fraction_is_identity(self, rng):
        labels = rng.integers(0, 3, 60)
        assert np.array_equal(scarcity_indices(labels, 1.0, seed=0), np.arange(60))

    def test_quarter_of_hundred_per_class(self):
        labels = np.repeat([0, 1], 100)
        keep = scarcity_indices(labels, 0.25, seed=3)
        kept_labels = labels[keep]
        assert (kept_labels == 0).sum() == 25
        assert (kept_labels == 1).sum() == 25

    def test_nested_across_fractions(self, rng):
        labels = rng.integers(0, 3, 200)
        subsets = {f: set(scarcity_indices(labels, f, seed=5).tolist())
                   for f in (0.10, 0.25, 0.50, 0.75)}
        assert subsets[0.10] <= subsets[0.25] <= subsets[0.50] <= subsets[0.75]

    def test_stratification_within_one(self, rng):
        labels = np.array([0] * 81 + [1] * 19)
        keep = scarcity_indices(labels, 0.5, seed=2)
        kept = labels[keep]
        assert abs((kept == 0).sum() - 40.5) <= 0.5
        assert abs((kept == 1).sum() - 9.5) <= 0.5

    def test_fraction_below_one_sample_rejected(self):
        labels = np.array([0, 0, 1, 1, 1, 1])
        with pytest.raises(ValueError, match="below 1"):
            scarcity_indices(labels, 0.1, seed=0)
        with pytest.raises(ValueError, match="fraction"):
            scarcity_indices(labels, 0.0, seed=0)
