"""Seed-deterministic multi-species accelerometer-like data.

Classes map to motifs from a tiny shared pool of waveform families (swaying
sinusoid, square burst, damped tremor); species differ by an amplitude
scale, a frequency shift and a fixed sensor-axis rotation applied on top of
the shared motifs, plus a rotated constant gravity component. Because the
same motifs appear across species, a model that shares its trunk can profit
from every species' data, while the transforms guarantee genuinely
species-specific structure for the per-species machinery to absorb.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .data import RawRecording, SpeciesMeta


def _sway(t: np.ndarray, freq: float, phase: float, amp: float) -> np.ndarray:
    return amp * np.stack([
        np.sin(2.0 * np.pi * freq * t + phase),
        0.6 * np.sin(2.0 * np.pi * freq * t + phase + 1.1),
        0.3 * np.sin(4.0 * np.pi * freq * t + phase),
    ])


def _burst(t: np.ndarray, freq: float, phase: float, amp: float) -> np.ndarray:
    square = np.sign(np.sin(2.0 * np.pi * freq * t + phase))
    slow = np.sign(np.sin(np.pi * freq * t + 0.5 * phase))
    return amp * np.stack([0.4 * slow, square, 0.5 * square * slow])


def _tremor(t: np.ndarray, freq: float, phase: float, amp: float) -> np.ndarray:
    # a decaying cousin of the sway motif, deliberately confusable with it
    span = t[-1] if t[-1] > 0 else 1.0
    decay = np.exp(-2.2 * t / span)
    return amp * np.stack([
        decay * np.sin(2.0 * np.pi * freq * t + phase),
        0.6 * decay * np.sin(2.0 * np.pi * freq * t + phase + 1.1),
        0.3 * decay * np.sin(4.0 * np.pi * freq * t + phase),
    ])


MOTIFS = {
    "burst": (_burst, 2.8),
    "sway": (_sway, 1.2),
    "tremor": (_tremor, 1.8),
}


def _motif_templates(seed: int) -> Dict[str, Tuple]:
    """Fix each motif's instantiation (frequency, phase, scale) per dataset.

    One template per motif means every window of a class is the template
    plus noise: with zero noise, windows of a class are identical up to the
    species transform, and extra species genuinely add observations of the
    shared waveform.
    """
    templates = {}
    for motif_id, name in enumerate(sorted(MOTIFS)):
        fn, base = MOTIFS[name]
        r = np.random.default_rng([seed, motif_id])
        templates[name] = (fn, base * r.uniform(0.85, 1.2),
                           r.uniform(0.0, 2.0 * np.pi), r.uniform(0.8, 1.2))
    return templates


@dataclass
class SyntheticSpecies:
    species_id: int
    name: str
    rate_hz: float
    motifs: List[str]            # class index -> motif name
    amplitude: float = 1.0
    freq_scale: float = 1.0
    rotation_deg: float = 0.0    # sensor mounting rotation about the z axis
    subjects: int = 4


@dataclass
class SyntheticSpec:
    species: List[SyntheticSpecies] = field(default_factory=list)
    samples_per_class: int = 200
    noise_sigma: float = 0.9
    gravity: float = 1.0
    seconds: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        if not self.species:
            raise ValueError("spec needs at least one species")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        usage: Dict[str, int] = {}
        for sp in self.species:
            if not sp.motifs:
                raise ValueError(f"species {sp.species_id} has no classes")
            for m in set(sp.motifs):
                if m not in MOTIFS:
                    raise ValueError(f"unknown motif {m!r}; pool: {sorted(MOTIFS)}")
                usage[m] = usage.get(m, 0) + 1
        if len(self.species) > 1 and not any(v >= 2 for v in usage.values()):
            raise ValueError("at least one motif must be shared by two or more species")


def _rotation(deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    c, s = np.cos(rad), np.sin(rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def default_spec(samples_per_class: int = 200, seed: int = 0,
                 noise_sigma: float = 0.9) -> SyntheticSpec:
    """Three species sharing all motifs, mimicking the 100/25/12.5 Hz mix.

    Transforms are mild at the input level (the divergence between species
    should grow with feature depth, not start huge at the raw signal), and
    the amplitude acts as a sensor gain, so no species is intrinsically
    noisier than another.
    """
    return SyntheticSpec(
        species=[
            SyntheticSpecies(0, "fastwalker", 100.0, ["burst", "sway", "tremor"],
                             amplitude=1.15, freq_scale=1.12, rotation_deg=0.0),
            SyntheticSpecies(1, "midgrazer", 25.0, ["burst", "sway", "tremor"],
                             amplitude=1.0, freq_scale=1.0, rotation_deg=-25.0),
            SyntheticSpecies(2, "slowgrazer", 12.5, ["burst", "sway", "tremor"],
                             amplitude=0.85, freq_scale=0.9, rotation_deg=20.0),
        ],
        samples_per_class=samples_per_class,
        noise_sigma=noise_sigma,
        seed=seed,
    )


def spec_from_dict(d: dict) -> SyntheticSpec:
    """Build a spec from its JSON form (see docs/formats.md for the key set)."""
    d = dict(d)
    species = [SyntheticSpecies(**sp) for sp in d.pop("species", [])]
    known = {"samples_per_class", "noise_sigma", "gravity", "seconds", "seed"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
    spec = SyntheticSpec(species=species, **d)
    spec.validate()
    return spec


def generate(spec: SyntheticSpec) -> Tuple[List[RawRecording], Dict[int, SpeciesMeta]]:
    """Produce per-subject recordings; bit-identical for identical specs."""
    spec.validate()
    recordings: List[RawRecording] = []
    meta: Dict[int, SpeciesMeta] = {}
    templates = _motif_templates(spec.seed)
    for sp in sorted(spec.species, key=lambda s: s.species_id):
        k = len(sp.motifs)
        wlen = int(round(spec.seconds * sp.rate_hz))
        t = np.arange(wlen) / sp.rate_hz
        rot = _rotation(sp.rotation_deg)
        offset = (rot @ np.array([0.0, 0.0, spec.gravity])) * sp.amplitude
        noise_rng = np.random.default_rng([spec.seed, 7, sp.species_id])

        order = [(c, i) for i in range(spec.samples_per_class) for c in range(k)]
        per_subject: List[List[Tuple[np.ndarray, int]]] = [[] for _ in range(sp.subjects)]
        for w_index, (cls, _instance) in enumerate(order):
            fn, freq, phase, amp = templates[sp.motifs[cls]]
            wave = fn(t, freq * sp.freq_scale, phase, amp)
            wave = wave + noise_rng.normal(0.0, spec.noise_sigma, size=wave.shape)
            # amplitude acts like a sensor gain: it scales signal and noise
            # alike, shifting the distribution without changing the SNR
            wave = rot @ (sp.amplitude * wave) + offset[:, None]
            per_subject[w_index % sp.subjects].append((wave, cls))

        for j, windows in enumerate(per_subject):
            if not windows:
                continue
            channels = np.concatenate([w for w, _ in windows], axis=1)
            labels = np.concatenate([np.full(wlen, cls, dtype=np.int64) for _, cls in windows])
            recordings.append(RawRecording(
                species_id=sp.species_id, sampling_rate_hz=sp.rate_hz,
                channels=channels, labels=labels, subject_id=f"{sp.name}-{j}"))
        meta[sp.species_id] = SpeciesMeta(name=sp.name, class_names=list(sp.motifs))
    return recordings, meta


def write_canonical_csv(recordings: Sequence[RawRecording], meta: Dict[int, SpeciesMeta],
                        path) -> None:
    """Emit the canonical ingestion CSV so synthetic data reuses that path."""
    lines = ["species,subject,rate_hz,t,ax,ay,az,label"]
    for rec in recordings:
        names = meta[rec.species_id].class_names
        rate = float(rec.sampling_rate_hz)
        for i in range(len(rec)):
            label = names[rec.labels[i]]
            ax, ay, az = (float(v) for v in rec.channels[:, i])
            lines.append(f"{rec.species_id},{rec.subject_id},{rate!r},{float(i / rate)!r},"
                         f"{ax!r},{ay!r},{az!r},{label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def scarcity_indices(labels: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Stratified positions for a training-pool fraction; smaller fractions nest.

    Each class is shuffled once per seed and a prefix of round(fraction * n)
    is kept, so the 10% subset is contained in the 25% subset and so on.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    labels = np.asarray(labels, dtype=np.int64)
    if fraction == 1.0:
        return np.arange(labels.size)
    picked = []
    for c in np.unique(labels):
        positions = np.flatnonzero(labels == c)
        keep = int(round(fraction * len(positions)))
        if keep < 1:
            raise ValueError(
                f"fraction {fraction} reduces class {int(c)} ({len(positions)} samples) below 1")
        shuffled = np.random.default_rng([seed, int(c)]).permutation(positions)
        picked.append(shuffled[:keep])
    return np.sort(np.concatenate(picked))
