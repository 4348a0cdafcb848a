"""Artifact writers: CSV/JSON reports and the per-command run manifest.

Apart from manifest timestamps, identical runs produce byte-identical
artifacts: floats are written with repr (round-trips exactly) and JSON keys
are sorted.
"""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from . import __version__


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_curves_csv(curves: Iterable[dict], path) -> None:
    """`epoch,species,split,accuracy,loss`, one row per epoch/species/split."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "species", "split", "accuracy", "loss"])
        for row in curves:
            writer.writerow([row["epoch"], row["species"], row["split"],
                             _fmt(row["accuracy"]), _fmt(row["loss"])])


def write_metrics_json(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_sweep_csv(rows: Iterable[dict], path) -> None:
    """Tidy long format: `sweep_var,value,species,metric,mean,std`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep_var", "value", "species", "metric", "mean", "std"])
        for row in rows:
            writer.writerow([row["sweep_var"], row["value"], row["species"], row["metric"],
                             _fmt(row["mean"]), _fmt(row["std"])])


def write_bn_stats_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer_index", "layer", "species",
                         "mean_of_running_means", "mean_of_running_vars"])
        for row in rows:
            writer.writerow([row["layer_index"], row["layer"], row["species"],
                             _fmt(row["mean_of_running_means"]),
                             _fmt(row["mean_of_running_vars"])])


def write_confusion_csv(confusion: np.ndarray, class_names: Sequence[str], path) -> None:
    """Row-normalized percentages (recall view), rows true, columns predicted."""
    confusion = np.asarray(confusion, dtype=np.float64)
    sums = confusion.sum(axis=1, keepdims=True)
    normalized = np.where(sums > 0, 100.0 * confusion / np.where(sums > 0, sums, 1.0), 0.0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, normalized):
            writer.writerow([name] + [_fmt(v) for v in row])


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Manifest:
    """Records what a command did: config echo, seed, input hashes, outputs."""

    def __init__(self, command: str, config: dict = None, seed=None):
        self.data = {
            "command": command,
            "version": __version__,
            "config": config or {},
            "seed": seed,
            "inputs": {},
            "outputs": [],
            "started_at": datetime.now(timezone.utc).isoformat(),
            "finished_at": None,
        }

    def add_input(self, path) -> None:
        self.data["inputs"][str(path)] = sha256_of(path)

    def add_output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def write(self, path) -> None:
        self.data["finished_at"] = datetime.now(timezone.utc).isoformat()
        self.add_output(path)
        Path(path).write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
