"""Metric tests: every pair metric is checked against literal enumeration
of all unordered cell pairs."""

import itertools
import math

import numpy as np
import pytest

from aoiseg.errors import InputError
from aoiseg.grid import SegmentationMap, Trajectory
from aoiseg.metrics import (
    PairConfusion,
    co_aoi_rate,
    fmi,
    pair_confusion,
    r1,
    r2,
    switch_count,
)


# ---------------------------------------------------------------- oracles

def enumerate_pair_confusion(truth, pred):
    """Literal loop over all unordered cell pairs."""
    t = truth.labels.ravel()
    p = pred.labels.ravel()
    tp = fp = fn = 0
    for i, j in itertools.combinations(range(t.size), 2):
        same_t = t[i] == t[j]
        same_p = p[i] == p[j]
        if same_t and same_p:
            tp += 1
        elif same_p:
            fp += 1
        elif same_t:
            fn += 1
    return PairConfusion(tp=tp, fp=fp, fn=fn)


def random_map(rng, rows, cols, k):
    return SegmentationMap(rng.integers(0, k, size=(rows, cols)))


# ------------------------------------------------------------ switch_count

def test_switch_zero_inside_one_aoi():
    seg = SegmentationMap.uniform(3, 3)
    assert switch_count(seg, Trajectory([0, 1, 2, 5])) == 0


def test_switch_single_crossing():
    seg = SegmentationMap([[0, 0, 1, 1]])
    assert switch_count(seg, Trajectory([0, 1, 2, 3])) == 1


def test_switch_matches_pair_scan():
    rng = np.random.default_rng(2)
    seg = random_map(rng, 6, 6, 4)
    cells = [int(rng.integers(36))]
    for _ in range(19):
        r, c = divmod(cells[-1], 6)
        moves = [
            (r + dr) * 6 + (c + dc)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if 0 <= r + dr < 6 and 0 <= c + dc < 6
        ]
        cells.append(moves[int(rng.integers(len(moves)))])
    traj = Trajectory(cells)
    lab = seg.labels.ravel()
    expected = sum(1 for a, b in zip(cells, cells[1:]) if lab[a] != lab[b])
    assert switch_count(seg, traj) == expected


# ---------------------------------------------------------------------- r1

def test_r1_single_trajectory():
    seg = SegmentationMap([[0, 1, 0, 1]])
    assert r1(seg, [Trajectory([0, 1, 2, 3])]) == -3.0


def test_r1_is_mean_over_trajectories():
    seg = SegmentationMap([[0, 0, 1, 1, 2]])
    trajs = [
        Trajectory([0, 1]),          # 0 switches
        Trajectory([1, 2]),          # 1
        Trajectory([1, 2, 3, 4]),    # 2
        Trajectory([3, 4]),          # 1
    ]
    assert r1(seg, trajs) == -1.0


def test_r1_requires_trajectories():
    with pytest.raises(InputError):
        r1(SegmentationMap.uniform(2, 2), [])


# ------------------------------------------------------------ pair metrics

def test_pair_confusion_identical_maps():
    rng = np.random.default_rng(4)
    seg = random_map(rng, 4, 4, 3)
    pc = pair_confusion(seg, seg)
    assert pc.fp == 0 and pc.fn == 0


def test_pair_confusion_2x2_example():
    truth = SegmentationMap([[0, 0], [1, 1]])
    pred = SegmentationMap([[0, 1], [2, 2]])
    pc = pair_confusion(truth, pred)
    assert (pc.tp, pc.fp, pc.fn) == (1, 0, 1)
    assert pc == enumerate_pair_confusion(truth, pred)


def test_pair_confusion_singleton_pred():
    truth = SegmentationMap([[0, 0], [0, 0]])
    pred = SegmentationMap([[0, 1], [2, 3]])
    pc = pair_confusion(truth, pred)
    assert pc.tp == 0 and pc.fp == 0


def test_pair_confusion_rejects_dimension_mismatch():
    with pytest.raises(InputError):
        pair_confusion(SegmentationMap.uniform(2, 2), SegmentationMap.uniform(2, 3))


def test_fmi_identical_is_one():
    rng = np.random.default_rng(6)
    seg = random_map(rng, 5, 5, 3)
    assert fmi(seg, seg) == 1.0


def test_fmi_2x2_example():
    truth = SegmentationMap([[0, 0], [1, 1]])
    pred = SegmentationMap([[0, 1], [2, 2]])
    assert fmi(truth, pred) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_fmi_zero_when_no_true_positives():
    truth = SegmentationMap([[0, 1], [2, 3]])
    pred = SegmentationMap.uniform(2, 2)
    assert fmi(truth, pred) == 0.0


def test_co_aoi_rate_identical_and_2x2():
    truth = SegmentationMap([[0, 0], [1, 1]])
    pred = SegmentationMap([[0, 1], [2, 2]])
    assert co_aoi_rate(truth, truth) == 1.0
    assert co_aoi_rate(truth, pred) == 0.5


def test_co_aoi_rate_rejects_all_singleton_truth():
    with pytest.raises(InputError):
        co_aoi_rate(SegmentationMap([[0, 1], [2, 3]]), SegmentationMap.uniform(2, 2))


def test_r2_trivial_cases():
    road = SegmentationMap([[0, 0], [1, 1]])
    assert r2(road, road) == 1.0
    singles = SegmentationMap([[0, 1], [2, 3]])
    assert r2(singles, road) == 0.0


def test_pair_metrics_match_enumeration_on_random_pairs():
    rng = np.random.default_rng(8)
    for _ in range(20):
        truth = random_map(rng, 6, 6, int(rng.integers(2, 6)))
        pred = random_map(rng, 6, 6, int(rng.integers(2, 6)))
        pc = pair_confusion(truth, pred)
        oracle = enumerate_pair_confusion(truth, pred)
        assert pc == oracle
        if oracle.tp + oracle.fn > 0:
            assert co_aoi_rate(truth, pred) == pytest.approx(
                oracle.tp / (oracle.tp + oracle.fn), abs=1e-12
            )
        if oracle.tp > 0:
            direct = oracle.tp / math.sqrt(
                (oracle.tp + oracle.fp) * (oracle.tp + oracle.fn)
            )
            assert fmi(truth, pred) == pytest.approx(direct, abs=1e-12)


def test_metrics_invariant_under_label_permutation():
    rng = np.random.default_rng(10)
    truth = random_map(rng, 5, 5, 4)
    pred = random_map(rng, 5, 5, 4)
    perm = rng.permutation(8)
    pred_renamed = SegmentationMap(perm[pred.labels])
    truth_renamed = SegmentationMap(perm[truth.labels])
    assert fmi(truth, pred) == pytest.approx(fmi(truth_renamed, pred_renamed), abs=1e-15)
    assert co_aoi_rate(truth, pred) == pytest.approx(
        co_aoi_rate(truth_renamed, pred_renamed), abs=1e-15
    )


def test_fmi_symmetric_under_argument_swap():
    rng = np.random.default_rng(12)
    truth = random_map(rng, 5, 5, 3)
    pred = random_map(rng, 5, 5, 4)
    assert fmi(truth, pred) == pytest.approx(fmi(pred, truth), abs=1e-15)
