"""Window extraction and resampling for raw tri-axial accelerometer data.

Recordings arrive at whatever rate the sensor used; they are cut into
non-overlapping fixed-duration windows (majority vote over the per-timestep
labels), then every window is linearly interpolated along time onto a common
length so one network can consume all species. For a height-1 signal,
bilinear interpolation degenerates to exactly this per-channel linear
interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

TARGET_LEN = 50
WINDOW_SECONDS = 2.0


@dataclass
class RawRecording:
    """One continuous recording: 3 aligned acceleration channels plus labels.

    ``channels`` is (3, n); ``labels`` holds per-timestep class ids, -1 for
    timesteps whose activity is outside the configured class set.
    """

    species_id: int
    sampling_rate_hz: float
    channels: np.ndarray
    labels: np.ndarray
    subject_id: str

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.channels.ndim != 2 or self.channels.shape[0] != 3:
            raise ValueError(f"channels must be (3, n), got {self.channels.shape}")
        if self.labels.shape != (self.channels.shape[1],):
            raise ValueError(
                f"labels length {self.labels.shape} does not match {self.channels.shape[1]} timesteps")
        if self.sampling_rate_hz <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.sampling_rate_hz}")

    def __len__(self) -> int:
        return self.channels.shape[1]


@dataclass
class SampleWindow:
    """A resampled window ready for the network: data is (1, 3, target_len)."""

    data: np.ndarray
    species_id: int
    label: int
    subject_id: str


@dataclass
class SpeciesMeta:
    name: str
    class_names: List[str]


@dataclass
class SpeciesSet:
    """All windows of one species, stored as arrays for batching."""

    species_id: int
    name: str
    class_names: List[str]
    data: np.ndarray          # (n, 3, target_len)
    labels: np.ndarray        # (n,)
    subjects: List[str]

    def __len__(self) -> int:
        return self.data.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.class_names))


@dataclass
class WindowDataset:
    target_len: int
    species: Dict[int, SpeciesSet] = field(default_factory=dict)

    def species_classes(self) -> Dict[int, int]:
        return {s: len(ss.class_names) for s, ss in self.species.items()}

    def merge(self, other: "WindowDataset") -> "WindowDataset":
        if other.target_len != self.target_len:
            raise ValueError("cannot merge datasets with different window lengths")
        overlap = set(self.species) & set(other.species)
        if overlap:
            raise ValueError(f"species {sorted(overlap)} present in both datasets")
        merged = dict(self.species)
        merged.update(other.species)
        return WindowDataset(self.target_len, merged)


def window_recording(recording: RawRecording,
                     seconds: float = WINDOW_SECONDS) -> Tuple[List[Tuple[np.ndarray, int]], int]:
    """Cut non-overlapping windows with majority labels.

    Returns (kept windows, dropped count); a window is dropped when its
    majority label is -1, i.e. mostly outside the class set. Majority ties
    break toward the smaller label id. The trailing partial window is
    discarded.
    """
    if len(recording) == 0:
        raise ValueError("empty recording")
    wlen = int(round(seconds * recording.sampling_rate_hz))
    if wlen < 1:
        raise ValueError(f"window of {seconds}s at {recording.sampling_rate_hz}Hz is empty")
    n_windows = len(recording) // wlen
    kept: List[Tuple[np.ndarray, int]] = []
    dropped = 0
    for i in range(n_windows):
        sl = slice(i * wlen, (i + 1) * wlen)
        votes = np.bincount(recording.labels[sl] + 1)  # slot 0 counts the -1 labels
        majority = int(np.argmax(votes)) - 1
        if majority < 0:
            dropped += 1
            continue
        kept.append((recording.channels[:, sl], majority))
    return kept, dropped


def resample_window(window: np.ndarray, target_len: int = TARGET_LEN) -> np.ndarray:
    """Per-channel linear interpolation onto target_len uniform positions.

    The output spans [0, n-1] so the first and last samples are preserved
    exactly, affine signals are reproduced exactly, and n == target_len is
    the identity.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[0] != 3:
        raise ValueError(f"window must be (3, n), got {window.shape}")
    n = window.shape[1]
    if n < 2:
        raise ValueError(f"cannot resample a window of {n} samples")
    if n == target_len:
        return window.copy()
    positions = np.linspace(0.0, n - 1.0, target_len)
    base = np.arange(n, dtype=np.float64)
    return np.stack([np.interp(positions, base, window[c]) for c in range(3)])


def windows_from_recordings(recordings: Sequence[RawRecording],
                            meta: Dict[int, SpeciesMeta],
                            target_len: int = TARGET_LEN,
                            seconds: float = WINDOW_SECONDS,
                            ) -> Tuple[WindowDataset, Dict[int, int]]:
    """Window + resample a batch of recordings into a dataset.

    Output ordering is deterministic: recordings sorted by (species,
    subject), windows in temporal order. Returns the dataset and the count
    of dropped windows per species.
    """
    ordered = sorted(range(len(recordings)),
                     key=lambda i: (recordings[i].species_id, recordings[i].subject_id, i))
    per_species: Dict[int, List[SampleWindow]] = {s: [] for s in meta}
    dropped: Dict[int, int] = {s: 0 for s in meta}
    for i in ordered:
        rec = recordings[i]
        if rec.species_id not in meta:
            raise KeyError(f"recording references unknown species id {rec.species_id}")
        kept, n_dropped = window_recording(rec, seconds=seconds)
        dropped[rec.species_id] += n_dropped
        for raw, label in kept:
            resampled = resample_window(raw, target_len)
            per_species[rec.species_id].append(
                SampleWindow(resampled.reshape(1, 3, target_len), rec.species_id, label,
                             rec.subject_id))
    dataset = WindowDataset(target_len)
    for s, windows in per_species.items():
        if not windows:
            continue
        dataset.species[s] = SpeciesSet(
            species_id=s,
            name=meta[s].name,
            class_names=list(meta[s].class_names),
            data=np.stack([w.data[0] for w in windows]),
            labels=np.array([w.label for w in windows], dtype=np.int64),
            subjects=[w.subject_id for w in windows],
        )
    return dataset, dropped


@dataclass
class ChannelStandardizer:
    """Per-channel affine scaling fitted on the training fold only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, window_arrays: Sequence[np.ndarray]) -> "ChannelStandardizer":
        stacked = np.concatenate([np.asarray(a).reshape(-1, 3, a.shape[-1]) for a in window_arrays])
        mean = stacked.mean(axis=(0, 2))
        std = stacked.std(axis=(0, 2))
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    @classmethod
    def identity(cls) -> "ChannelStandardizer":
        return cls(mean=np.zeros(3), std=np.ones(3))

    def apply(self, windows: np.ndarray) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        return (windows - self.mean.reshape(1, 3, 1)) / self.std.reshape(1, 3, 1)
