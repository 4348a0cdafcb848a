"""Versioned binary container for prepared windows.

Byte layout (all integers little-endian, documented in docs/formats.md):

    offset 0   8 bytes   magic b"HERDWIN\\x00"
    offset 8   u16       format version (currently 1)
    offset 10  u32       header length H in bytes
    offset 14  H bytes   UTF-8 JSON header: target_len, channel count,
                         species table (id, name, class names, window count),
                         subject table
    then, per window, in header order:
               u16       species id
               u16       label
               u32       index into the subject table
               3 * target_len f8 (little-endian), channel-major

Floats round-trip bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, List

import numpy as np

from .data import SpeciesSet, WindowDataset

MAGIC = b"HERDWIN\x00"
VERSION = 1


class ArchiveError(ValueError):
    pass


def write_archive(dataset: WindowDataset, path) -> None:
    subjects: List[str] = sorted({sub for ss in dataset.species.values() for sub in ss.subjects})
    subject_index = {name: i for i, name in enumerate(subjects)}
    header = {
        "target_len": dataset.target_len,
        "channels": 3,
        "species": [
            {
                "id": s,
                "name": ss.name,
                "classes": list(ss.class_names),
                "windows": len(ss),
            }
            for s, ss in sorted(dataset.species.items())
        ],
        "subjects": subjects,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for s, ss in sorted(dataset.species.items()):
            data = np.ascontiguousarray(ss.data, dtype="<f8")
            for i in range(len(ss)):
                fh.write(struct.pack("<HHI", s, int(ss.labels[i]),
                                     subject_index[ss.subjects[i]]))
                fh.write(data[i].tobytes())


def read_archive(path) -> WindowDataset:
    raw = Path(path).read_bytes()
    if len(raw) < 14 or raw[:8] != MAGIC:
        raise ArchiveError(f"{path}: not a herdnet window archive")
    version, header_len = struct.unpack_from("<HI", raw, 8)
    if version != VERSION:
        raise ArchiveError(f"{path}: unsupported archive version {version}")
    try:
        header = json.loads(raw[14:14 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ArchiveError(f"{path}: corrupt header ({err})") from None
    target_len = int(header["target_len"])
    channels = int(header["channels"])
    subjects = header["subjects"]
    record = struct.Struct("<HHI")
    window_bytes = channels * target_len * 8
    offset = 14 + header_len

    dataset = WindowDataset(target_len)
    for entry in header["species"]:
        s, n = int(entry["id"]), int(entry["windows"])
        data = np.empty((n, channels, target_len))
        labels = np.empty(n, dtype=np.int64)
        subject_list: List[str] = []
        for i in range(n):
            if offset + record.size + window_bytes > len(raw):
                raise ArchiveError(f"{path}: truncated at window {i} of species {s}")
            species_id, label, subject_idx = record.unpack_from(raw, offset)
            if species_id != s:
                raise ArchiveError(f"{path}: window/species table mismatch at offset {offset}")
            offset += record.size
            data[i] = np.frombuffer(raw, dtype="<f8", count=channels * target_len,
                                    offset=offset).reshape(channels, target_len)
            labels[i] = label
            subject_list.append(subjects[subject_idx])
            offset += window_bytes
        dataset.species[s] = SpeciesSet(
            species_id=s, name=entry["name"], class_names=list(entry["classes"]),
            data=data, labels=labels, subjects=subject_list)
    if offset != len(raw):
        raise ArchiveError(f"{path}: {len(raw) - offset} trailing bytes")
    return dataset
