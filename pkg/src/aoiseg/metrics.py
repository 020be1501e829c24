"""Evaluation metrics: trajectory switch counts (R1), road similarity (R2),
Fowlkes-Mallows index and Co-AOI rate.

Pair metrics are computed from a label contingency table, which is
O(M*N + K1*K2) instead of enumerating all O((M*N)^2) cell pairs; the test
suite checks equivalence against literal pair enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .grid import SegmentationMap, Trajectory


@dataclass(frozen=True)
class PairConfusion:
    """Unordered cell-pair counts between a reference and a prediction.

    tp: pairs equivalent (same AOI) in both maps
    fp: pairs equivalent in the prediction only
    fn: pairs equivalent in the reference only
    """

    tp: int
    fp: int
    fn: int


def switch_count(seg: SegmentationMap, traj: Trajectory) -> int:
    """Number of consecutive trajectory steps that cross an AOI boundary."""
    n = seg.rows * seg.cols
    if traj.cells.min() < 0 or traj.cells.max() >= n:
        raise InputError("trajectory cell index out of bounds for this map")
    lab = seg.labels.ravel()[traj.cells]
    return int(np.count_nonzero(lab[1:] != lab[:-1]))


def total_switches(seg: SegmentationMap, trajectories: Sequence[Trajectory]) -> int:
    return sum(switch_count(seg, t) for t in trajectories)


def r1(seg: SegmentationMap, trajectories: Sequence[Trajectory]) -> float:
    """Negated mean switch count per trajectory; 0 is optimal."""
    if not trajectories:
        raise InputError("r1 requires at least one trajectory")
    return -total_switches(seg, trajectories) / len(trajectories)


def _pair_count(counts: np.ndarray) -> int:
    """Sum over n*(n-1)/2 for an array of non-negative counts."""
    c = counts.astype(np.int64)
    return int((c * (c - 1) // 2).sum())


def pair_confusion(truth: SegmentationMap, pred: SegmentationMap) -> PairConfusion:
    """Pair counts over all unordered cell pairs, via contingency table."""
    if truth.shape != pred.shape:
        raise InputError(f"dimension mismatch: {truth.shape} vs {pred.shape}")
    _, ti = np.unique(truth.labels.ravel(), return_inverse=True)
    _, pi = np.unique(pred.labels.ravel(), return_inverse=True)
    n_pred = int(pi.max()) + 1
    joint = np.bincount(ti * n_pred + pi)
    tp = _pair_count(joint)
    truth_pairs = _pair_count(np.bincount(ti))
    pred_pairs = _pair_count(np.bincount(pi))
    return PairConfusion(tp=tp, fp=pred_pairs - tp, fn=truth_pairs - tp)


def fmi(truth: SegmentationMap, pred: SegmentationMap) -> float:
    """Fowlkes-Mallows index: TP / sqrt((TP+FP) * (TP+FN)); 0 when TP = 0."""
    pc = pair_confusion(truth, pred)
    if pc.tp == 0:
        return 0.0
    return pc.tp / math.sqrt((pc.tp + pc.fp) * (pc.tp + pc.fn))


def co_aoi_rate(truth: SegmentationMap, pred: SegmentationMap) -> float:
    """Fraction of truth-equivalent cell pairs also equivalent in pred."""
    pc = pair_confusion(truth, pred)
    denom = pc.tp + pc.fn
    if denom == 0:
        raise InputError("co_aoi_rate undefined: reference map has no equivalent pairs")
    return pc.tp / denom


def r2(pred: SegmentationMap, road_partition: SegmentationMap) -> float:
    """Similarity to the road partition: Co-AOI rate with the road map as reference."""
    return co_aoi_rate(road_partition, pred)
