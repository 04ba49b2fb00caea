"""CSV/JSON artifacts.

Snapshot CSV layout (fixed):

    x0[,x1],count,density

one row per cell, cell centres first. Particle histograms fill ``count``;
deterministic fields (PDE, phantom) leave it empty. Floats use the shortest
decimal string that round-trips (``repr``). Each CSV has a JSON sidecar with
the snapshot metadata.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np


def fmt(v) -> str:
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w") as f:
        json.dump(_jsonable(obj), f, indent=2, sort_keys=True)
        f.write("\n")


def write_snapshot_csv(path: str, centers: np.ndarray, density: np.ndarray, counts: np.ndarray | None = None) -> None:
    centers = np.asarray(centers, float)
    centers = centers.reshape(len(density), -1)
    n = centers.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{k}" for k in range(n)] + ["count", "density"])
        for i in range(len(density)):
            row = [fmt(c) for c in centers[i]]
            row.append("" if counts is None else str(int(counts[i])))
            row.append(fmt(density[i]))
            w.writerow(row)


@dataclass
class SnapshotTable:
    centers: np.ndarray
    density: np.ndarray
    counts: np.ndarray | None
    meta: dict


def read_snapshot_csv(path: str) -> SnapshotTable:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty file")
    head = rows[0]
    n = len(head) - 2
    if n < 1 or head != [f"x{k}" for k in range(n)] + ["count", "density"]:
        raise ValueError(f"{path}: unexpected header {head}")
    body = rows[1:]
    centers = np.array([[float(v) for v in r[:n]] for r in body]).reshape(len(body), n)
    density = np.array([float(r[n + 1]) for r in body])
    counts = None
    if body and body[0][n] != "":
        counts = np.array([int(r[n]) for r in body], dtype=np.int64)
    side = os.path.splitext(path)[0] + ".json"
    meta = {}
    if os.path.exists(side):
        with open(side) as f:
            meta = json.load(f)
    return SnapshotTable(centers, density, counts, meta)
