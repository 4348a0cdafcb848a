"""Dataset ingestion: the canonical CSV plus the three public-release adapters.

Canonical CSV header: ``species,subject,rate_hz,t,ax,ay,az,label``. Rows are
grouped into one recording per (species, subject), ordered by t; class ids
are assigned by sorted label name per species. Malformed content raises
with the offending file and line number.

The public adapters read a directory (or single file) of per-subject CSVs,
keep only the tri-axial accelerometer columns, and apply each dataset's
label policy: horse keeps its five common activities, sheep merges walking
and scratching into "active" and standing and resting into "inactive",
cattle keeps its five behaviours. Rows with any other activity string are
kept out of the class set (and therefore out of the windows) but listed
with counts in the ingest report, never silently discarded. Expected
directory trees are documented in docs/formats.md.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .data import RawRecording, SpeciesMeta, WindowDataset, windows_from_recordings


class IngestError(ValueError):
    """User-facing ingestion failure (bad file, bad schema, bad values)."""


CANONICAL_COLUMNS = ["species", "subject", "rate_hz", "t", "ax", "ay", "az", "label"]

PUBLIC_SPECIES = {
    "horse": dict(
        species_id=0,
        rate_hz=100.0,
        classes=["grazing", "galloping", "standing", "trotting", "walking"],
        label_map={c: c for c in ["grazing", "galloping", "standing", "trotting", "walking"]},
    ),
    "sheep": dict(
        species_id=1,
        rate_hz=12.5,
        classes=["grazing", "active", "inactive"],
        label_map={
            "grazing": "grazing",
            "walking": "active",
            "scratching": "active",
            "standing": "inactive",
            "resting": "inactive",
        },
    ),
    "cattle": dict(
        species_id=2,
        rate_hz=25.0,
        classes=["grazing", "moving", "resting", "ruminating", "salting"],
        label_map={c: c for c in ["grazing", "moving", "resting", "ruminating", "salting"]},
    ),
}

_AXIS_ALIASES = {
    "ax": ("ax", "accx", "acc_x", "x"),
    "ay": ("ay", "accy", "acc_y", "y"),
    "az": ("az", "accz", "acc_z", "z"),
}
_LABEL_ALIASES = ("label", "activity", "behaviour", "behavior")


@dataclass
class IngestReport:
    """Counts emitted next to every prepared archive."""

    windows_per_class: Dict[int, Dict[str, int]] = field(default_factory=dict)
    dropped_windows: Dict[int, int] = field(default_factory=dict)
    unknown_label_rows: Dict[int, Dict[str, int]] = field(default_factory=dict)
    species_names: Dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        species = {}
        for s in sorted(self.species_names):
            species[str(s)] = {
                "name": self.species_names[s],
                "windows_per_class": self.windows_per_class.get(s, {}),
                "dropped_windows": self.dropped_windows.get(s, 0),
                "unknown_label_rows": self.unknown_label_rows.get(s, {}),
            }
        return {"species": species}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def ingest_canonical_csv(path) -> Tuple[List[RawRecording], Dict[int, SpeciesMeta]]:
    """Parse the canonical CSV into per-(species, subject) recordings."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: no such file")
    groups: Dict[Tuple[int, str], dict] = {}
    label_names: Dict[int, set] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, expected header "
                              f"{','.join(CANONICAL_COLUMNS)}") from None
        header = [h.strip() for h in header]
        missing = [c for c in CANONICAL_COLUMNS if c not in header]
        if missing:
            raise IngestError(f"{path}:1: missing columns {missing}")
        col = {name: header.index(name) for name in CANONICAL_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                species = int(row[col["species"]])
                rate = float(row[col["rate_hz"]])
                t = float(row[col["t"]])
                values = [float(row[col[a]]) for a in ("ax", "ay", "az")]
            except ValueError as err:
                raise IngestError(f"{path}:{lineno}: unparseable numeric field ({err})") from None
            subject = row[col["subject"]].strip()
            label = row[col["label"]].strip()
            if rate <= 0:
                raise IngestError(f"{path}:{lineno}: non-positive rate_hz {rate}")
            key = (species, subject)
            group = groups.setdefault(key, {"rate": rate, "t": [], "xyz": [], "labels": []})
            if group["rate"] != rate:
                raise IngestError(
                    f"{path}:{lineno}: rate_hz changed within species {species} subject "
                    f"{subject!r} ({group['rate']} -> {rate})")
            if group["t"] and t <= group["t"][-1]:
                raise IngestError(
                    f"{path}:{lineno}: non-monotone t within species {species} subject "
                    f"{subject!r} ({group['t'][-1]!r} then {t!r})")
            group["t"].append(t)
            group["xyz"].append(values)
            group["labels"].append(label)
            label_names.setdefault(species, set()).add(label)

    meta = {s: SpeciesMeta(name=f"species{s}", class_names=sorted(names))
            for s, names in label_names.items()}
    recordings = []
    for (species, subject) in sorted(groups):
        group = groups[(species, subject)]
        class_index = {name: i for i, name in enumerate(meta[species].class_names)}
        labels = np.array([class_index[l] for l in group["labels"]], dtype=np.int64)
        recordings.append(RawRecording(
            species_id=species, sampling_rate_hz=group["rate"],
            channels=np.array(group["xyz"], dtype=np.float64).T,
            labels=labels, subject_id=subject))
    return recordings, meta


def _resolve_columns(header: List[str], path, kind: str) -> Dict[str, int]:
    lowered = [h.strip().lower() for h in header]
    resolved = {}
    for axis, aliases in _AXIS_ALIASES.items():
        for alias in aliases:
            if alias in lowered:
                resolved[axis] = lowered.index(alias)
                break
        else:
            raise IngestError(f"{path}:1: no {axis} column for the {kind} layout "
                              f"(accepted: {aliases})")
    for alias in _LABEL_ALIASES:
        if alias in lowered:
            resolved["label"] = lowered.index(alias)
            break
    else:
        raise IngestError(f"{path}:1: no label column (accepted: {_LABEL_ALIASES})")
    return resolved


def ingest_public_dataset(kind: str, path) -> Tuple[List[RawRecording], Dict[int, SpeciesMeta],
                                                    Dict[int, Dict[str, int]]]:
    """Read one public release; returns recordings, meta and unknown-label counts."""
    if kind not in PUBLIC_SPECIES:
        raise IngestError(f"unknown public dataset {kind!r}; expected one of "
                          f"{sorted(PUBLIC_SPECIES)}")
    info = PUBLIC_SPECIES[kind]
    root = Path(path)
    if root.is_dir():
        files = sorted(root.glob("*.csv"))
        if not files:
            raise IngestError(f"{root}: no .csv files for the {kind} dataset")
    elif root.is_file():
        files = [root]
    else:
        raise IngestError(f"{root}: no such file or directory")

    class_index = {name: i for i, name in enumerate(info["classes"])}
    label_map = info["label_map"]
    unknown: Counter = Counter()
    recordings = []
    for file in files:
        with open(file, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestError(f"{file}: empty file") from None
            col = _resolve_columns(header, file, kind)
            xyz = []
            labels = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                try:
                    xyz.append([float(row[col[a]]) for a in ("ax", "ay", "az")])
                except (ValueError, IndexError) as err:
                    raise IngestError(f"{file}:{lineno}: unparseable row ({err})") from None
                raw_label = row[col["label"]].strip().lower()
                mapped = label_map.get(raw_label)
                if mapped is None:
                    unknown[raw_label] += 1
                    labels.append(-1)
                else:
                    labels.append(class_index[mapped])
        if not xyz:
            continue
        recordings.append(RawRecording(
            species_id=info["species_id"], sampling_rate_hz=info["rate_hz"],
            channels=np.array(xyz, dtype=np.float64).T,
            labels=np.array(labels, dtype=np.int64), subject_id=file.stem))
    meta = {info["species_id"]: SpeciesMeta(name=kind, class_names=list(info["classes"]))}
    return recordings, meta, {info["species_id"]: dict(sorted(unknown.items()))}


def prepare_dataset(recordings: List[RawRecording], meta: Dict[int, SpeciesMeta],
                    target_len: int, seconds: float = 2.0,
                    unknown_rows: Optional[Dict[int, Dict[str, int]]] = None,
                    ) -> Tuple[WindowDataset, IngestReport]:
    """Window + resample recordings and assemble the ingest report."""
    dataset, dropped = windows_from_recordings(recordings, meta, target_len, seconds)
    report = IngestReport()
    for s, m in meta.items():
        report.species_names[s] = m.name
        report.dropped_windows[s] = dropped.get(s, 0)
        report.unknown_label_rows[s] = (unknown_rows or {}).get(s, {})
        if s in dataset.species:
            counts = dataset.species[s].class_counts()
            report.windows_per_class[s] = {
                name: int(c) for name, c in zip(m.class_names, counts)}
        else:
            report.windows_per_class[s] = {name: 0 for name in m.class_names}
    return dataset, report
