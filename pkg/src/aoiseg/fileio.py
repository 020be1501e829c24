"""File formats: map and instance JSON, PGM/PPM rasters, ingestion CSVs.

All writers emit deterministic bytes (sorted keys, fixed float formatting,
no timestamps) so identical inputs produce identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InputError
from .grid import GridCoord, SegmentationMap, Trajectory, densify
from .roadinit import GrayRaster
from .synth import SyntheticInstance

SCHEMA_VERSION = 1


def canonical_json(obj) -> str:
    """Stable JSON encoding used for hashing and on-disk artifacts."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_text(path, text: str, force: bool = False) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise InputError(f"{path} exists; pass force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_bytes(path, data: bytes, force: bool = False) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise InputError(f"{path} exists; pass force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


# ------------------------------------------------------------------- maps

def map_to_dict(seg: SegmentationMap) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "segmentation_map",
        "rows": seg.rows,
        "cols": seg.cols,
        "labels": [int(x) for x in seg.labels.ravel()],
    }


def map_from_dict(doc: dict) -> SegmentationMap:
    if doc.get("kind") != "segmentation_map":
        raise InputError("document is not a segmentation map")
    labels = np.asarray(doc["labels"], dtype=np.int64)
    if labels.size != doc["rows"] * doc["cols"]:
        raise InputError("label count does not match rows*cols")
    return SegmentationMap(labels.reshape(doc["rows"], doc["cols"]))


def save_map(seg: SegmentationMap, path, force: bool = False) -> None:
    write_text(path, canonical_json(map_to_dict(seg)) + "\n", force)


def load_map(path) -> SegmentationMap:
    return map_from_dict(json.loads(Path(path).read_text()))


# -------------------------------------------------------------- instances

def instance_to_dict(inst: SyntheticInstance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "synthetic_instance",
        "rows": inst.rows,
        "cols": inst.cols,
        "seed": inst.seed,
        "ground_truth": [int(x) for x in inst.ground_truth.labels.ravel()],
        "road_partition": [int(x) for x in inst.road_partition.labels.ravel()],
        "packages": [[[int(r), int(c)] for r, c in courier] for courier in inst.packages],
        "trajectories": [
            {"courier": int(courier), "cells": [int(x) for x in traj.cells]}
            for traj, courier in zip(inst.trajectories, inst.courier_of_trajectory)
        ],
    }


def instance_from_dict(doc: dict) -> SyntheticInstance:
    if doc.get("kind") != "synthetic_instance":
        raise InputError("document is not a synthetic instance")
    rows, cols = doc["rows"], doc["cols"]

    def to_map(key):
        return SegmentationMap(np.asarray(doc[key], dtype=np.int64).reshape(rows, cols))

    return SyntheticInstance(
        ground_truth=to_map("ground_truth"),
        trajectories=tuple(Trajectory(t["cells"]) for t in doc["trajectories"]),
        packages=tuple(
            tuple((int(r), int(c)) for r, c in courier) for courier in doc["packages"]
        ),
        road_partition=to_map("road_partition"),
        seed=doc["seed"],
        courier_of_trajectory=tuple(int(t["courier"]) for t in doc["trajectories"]),
    )


def save_instance(inst: SyntheticInstance, path, force: bool = False) -> None:
    write_text(path, canonical_json(instance_to_dict(inst)) + "\n", force)


def load_instance(path) -> SyntheticInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- PGM/PPM

def read_pgm(path) -> GrayRaster:
    """Binary PGM (P5), maxval up to 255, with comment support."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise InputError(f"{path}: truncated PGM header")
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if tokens[0] != b"P5":
        raise InputError(f"{path}: not a binary PGM (P5) file")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise InputError(f"{path}: 16-bit PGM not supported (maxval {maxval})")
    i += 1  # single whitespace after maxval
    pixels = np.frombuffer(data[i : i + rows * cols], dtype=np.uint8)
    if pixels.size != rows * cols:
        raise InputError(f"{path}: truncated PGM pixel data")
    return GrayRaster(pixels.reshape(rows, cols))


def write_pgm(path, raster: GrayRaster, force: bool = False) -> None:
    header = f"P5\n{raster.cols} {raster.rows}\n255\n".encode()
    write_bytes(path, header + raster.intensity.tobytes(), force)


def write_ppm(path, rgb: np.ndarray, force: bool = False) -> None:
    """Binary PPM (P6) from an (H, W, 3) uint8 array."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise InputError("rgb must be an (H, W, 3) uint8 array")
    header = f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode()
    write_bytes(path, header + rgb.tobytes(), force)


# --------------------------------------------------------------- ingestion

def load_packages_csv(path) -> dict[int, list[GridCoord]]:
    """CSV columns courier_id,row,col (header optional)."""
    out: dict[int, list[GridCoord]] = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() == "courier_id":
                continue
            courier, r, c = int(rec[0]), int(rec[1]), int(rec[2])
            out.setdefault(courier, []).append((r, c))
    if not out:
        raise InputError(f"{path}: no package records")
    return out


def load_trajectories_csv(path, rows: int, cols: int) -> dict[int, list[Trajectory]]:
    """CSV columns courier_id,seq,row,col; one trajectory per (courier, seq),
    points ordered by file position within each pair, densified on load."""
    raw: dict[tuple[int, int], list[GridCoord]] = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() == "courier_id":
                continue
            courier, seq, r, c = int(rec[0]), int(rec[1]), int(rec[2]), int(rec[3])
            raw.setdefault((courier, seq), []).append((r, c))
    if not raw:
        raise InputError(f"{path}: no trajectory records")
    out: dict[int, list[Trajectory]] = {}
    for (courier, _), points in sorted(raw.items()):
        out.setdefault(courier, []).append(densify(points, rows, cols))
    return out


# ------------------------------------------------------------------- CSV

def format_float(x: float | None) -> str:
    """Stable CSV float rendering; None becomes the empty cell."""
    if x is None:
        return ""
    return f"{x:.10g}"


def write_csv(path, header: list[str], rows: list[list[str]], force: bool = False) -> None:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    write_text(path, "\n".join(lines) + "\n", force)
