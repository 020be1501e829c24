"""Tests for the raster core: transfer graphs, borders, connectivity, densify."""

import numpy as np
import pytest

from aoiseg.errors import InputError
from aoiseg.grid import (
    DELTAS,
    SegmentationMap,
    Trajectory,
    border_cells,
    build_transfer_graph,
    densify,
    is_connected,
)

DIR_OF_DELTA = {d: i for i, d in enumerate(DELTAS)}


# ---------------------------------------------------------------- oracles

def brute_force_transfer(trajectories, rows, cols):
    """Tally every consecutive pair one by one."""
    w = np.zeros((rows, cols, 4), dtype=np.int64)
    for traj in trajectories:
        for a, b in zip(traj.cells, traj.cells[1:]):
            r1, c1 = divmod(int(a), cols)
            r2, c2 = divmod(int(b), cols)
            d = DIR_OF_DELTA[(r2 - r1, c2 - c1)]
            w[r1, c1, d] += 1
    return w


def brute_force_border(seg):
    out = []
    lab = seg.labels
    for r in range(seg.rows):
        for c in range(seg.cols):
            for dr, dc in DELTAS:
                nr, nc = r + dr, c + dc
                if 0 <= nr < seg.rows and 0 <= nc < seg.cols and lab[nr, nc] != lab[r, c]:
                    out.append((r, c))
                    break
    return out


def flood_fill_component_count(mask):
    mask = mask.copy()
    count = 0
    while mask.any():
        count += 1
        start = tuple(np.argwhere(mask)[0])
        stack = [start]
        mask[start] = False
        while stack:
            r, c = stack.pop()
            for dr, dc in DELTAS:
                nr, nc = r + dr, c + dc
                if 0 <= nr < mask.shape[0] and 0 <= nc < mask.shape[1] and mask[nr, nc]:
                    mask[nr, nc] = False
                    stack.append((nr, nc))
    return count


def bfs_shortest_path_length(start, goal, rows, cols):
    from collections import deque

    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur == goal:
            return dist[cur]
        for dr, dc in DELTAS:
            nxt = (cur[0] + dr, cur[1] + dc)
            if 0 <= nxt[0] < rows and 0 <= nxt[1] < cols and nxt not in dist:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)
    raise AssertionError("unreachable")


def random_two_aoi_map(rng, rows, cols):
    """Random vertical-ish split into two connected AOIs."""
    cut = rng.integers(1, cols)
    labels = np.zeros((rows, cols), dtype=np.int64)
    labels[:, cut:] = 1
    # jitter the boundary column per row, keeping both sides connected
    for r in range(rows):
        if rng.random() < 0.5 and cut + 1 < cols:
            labels[r, cut] = 1
    return SegmentationMap(labels)


# ------------------------------------------------------ build_transfer_graph

def test_transfer_single_transition():
    g = build_transfer_graph([Trajectory([0, 1])], 2, 2)
    assert g.weight[0, 0, 3] == 1  # right
    assert g.total() == 1


def test_transfer_empty_list():
    g = build_transfer_graph([], 3, 3)
    assert g.total() == 0


def test_transfer_matches_brute_force_tally():
    rng = np.random.default_rng(7)
    rows = cols = 4
    trajectories = []
    for _ in range(3):
        r, c = int(rng.integers(rows)), int(rng.integers(cols))
        cells = [r * cols + c]
        for _ in range(12):
            moves = [
                (r + dr, c + dc)
                for dr, dc in DELTAS
                if 0 <= r + dr < rows and 0 <= c + dc < cols
            ]
            r, c = moves[int(rng.integers(len(moves)))]
            cells.append(r * cols + c)
        trajectories.append(Trajectory(cells))
    g = build_transfer_graph(trajectories, rows, cols)
    assert np.array_equal(g.weight, brute_force_transfer(trajectories, rows, cols))


def test_transfer_is_additive_and_total_is_sum_of_lengths():
    rng = np.random.default_rng(21)
    rows = cols = 5
    groups = []
    for _ in range(2):
        trajs = []
        for _ in range(3):
            pts = [(int(rng.integers(rows)), int(rng.integers(cols))) for _ in range(6)]
            trajs.append(densify(pts, rows, cols))
        groups.append(trajs)
    g1 = build_transfer_graph(groups[0], rows, cols)
    g2 = build_transfer_graph(groups[1], rows, cols)
    both = build_transfer_graph(groups[0] + groups[1], rows, cols)
    assert np.array_equal(both.weight, (g1 + g2).weight)
    assert both.total() == sum(len(t) - 1 for t in groups[0] + groups[1])


def test_transfer_rejects_out_of_bounds():
    with pytest.raises(InputError):
        build_transfer_graph([Trajectory([0, 9])], 2, 2)


def test_transfer_rejects_non_adjacent():
    with pytest.raises(InputError):
        build_transfer_graph([Trajectory([0, 8])], 3, 3)
    with pytest.raises(InputError):
        # +1 across a row edge is not adjacency
        build_transfer_graph([Trajectory([2, 3])], 3, 3)


# ------------------------------------------------------------- border_cells

def test_border_uniform_map_is_empty():
    assert border_cells(SegmentationMap.uniform(4, 4)) == []


def test_border_two_column_map_is_everything():
    seg = SegmentationMap([[0, 1], [0, 1]])
    assert border_cells(seg) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_border_matches_neighbor_scan():
    rng = np.random.default_rng(11)
    for _ in range(20):
        seg = random_two_aoi_map(rng, 6, 6)
        assert border_cells(seg) == brute_force_border(seg)


def test_border_empty_iff_single_label():
    rng = np.random.default_rng(3)
    for _ in range(20):
        labels = rng.integers(0, 3, size=(5, 5))
        seg = SegmentationMap(labels)
        assert (border_cells(seg) == []) == (seg.num_labels() == 1)


# ------------------------------------------------------------- is_connected

def test_single_cell_connected():
    seg = SegmentationMap([[0, 1], [1, 1]])
    assert is_connected(seg, 0)


def test_diagonal_cells_not_connected():
    seg = SegmentationMap([[0, 1], [1, 0]])
    assert not is_connected(seg, 0)


def test_bfs_grown_blob_is_connected():
    rng = np.random.default_rng(5)
    rows = cols = 8
    for _ in range(10):
        blob = {(int(rng.integers(rows)), int(rng.integers(cols)))}
        for _ in range(20):
            r, c = list(blob)[int(rng.integers(len(blob)))]
            moves = [
                (r + dr, c + dc)
                for dr, dc in DELTAS
                if 0 <= r + dr < rows and 0 <= c + dc < cols
            ]
            blob.add(moves[int(rng.integers(len(moves)))])
        labels = np.zeros((rows, cols), dtype=np.int64)
        for cell in blob:
            labels[cell] = 1
        if 1 not in labels or 0 not in labels:
            continue
        assert is_connected(SegmentationMap(labels), 1)


def test_is_connected_rejects_absent_label():
    with pytest.raises(InputError):
        is_connected(SegmentationMap.uniform(2, 2), 5)


# ----------------------------------------------------------------- densify

def test_densify_adjacent_pair_passthrough():
    assert list(densify([(0, 0), (0, 1)], 1, 4).cells) == [0, 1]


def test_densify_collapses_duplicates():
    assert list(densify([(0, 0), (0, 0)], 2, 2).cells) == [0]


def test_densify_row_first_l_path():
    traj = densify([(0, 0), (2, 1)], 3, 3)
    assert list(traj.cells) == [0, 3, 6, 7]
    # path length equals the BFS shortest-path length
    assert len(traj) - 1 == bfs_shortest_path_length((0, 0), (2, 1), 3, 3)


def test_densify_is_shortest_between_every_input_pair():
    rng = np.random.default_rng(13)
    rows = cols = 7
    for _ in range(20):
        a = (int(rng.integers(rows)), int(rng.integers(cols)))
        b = (int(rng.integers(rows)), int(rng.integers(cols)))
        traj = densify([a, b], rows, cols)
        assert len(traj) - 1 == bfs_shortest_path_length(a, b, rows, cols)


def test_densify_rejects_empty_input():
    with pytest.raises(InputError):
        densify([], 2, 2)


def test_densify_output_is_transfer_graph_compatible():
    rng = np.random.default_rng(17)
    pts = [(int(rng.integers(6)), int(rng.integers(6))) for _ in range(8)]
    traj = densify(pts, 6, 6)
    build_transfer_graph([traj], 6, 6)  # must not raise


# --------------------------------------------------------------- canonical

def test_canonical_first_appearance_order():
    seg = SegmentationMap([[7, 7, 2], [3, 2, 2]])
    assert SegmentationMap([[0, 0, 1], [2, 1, 1]]).same_labels(seg.canonical())


def test_canonical_idempotent_and_permutation_invariant():
    rng = np.random.default_rng(23)
    for _ in range(25):
        labels = rng.integers(0, 5, size=(5, 4))
        seg = SegmentationMap(labels)
        canon = seg.canonical()
        assert canon.canonical().same_labels(canon)
        perm = rng.permutation(10)
        assert SegmentationMap(perm[labels]).canonical().same_labels(canon)
