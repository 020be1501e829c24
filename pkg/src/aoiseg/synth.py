"""Synthetic benchmark instances: ground-truth AOIs grown by randomized
region growing, courier trajectories from a small VRP heuristic, and a
deliberately coarse road partition obtained by merging ground-truth AOIs.

Everything is driven by an explicit seed; the same config reproduces the
same instance bit for bit. Couriers draw from independently spawned RNG
streams, so instances could equally be generated courier-parallel.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InputError
from .grid import (
    DELTAS,
    GridCoord,
    SegmentationMap,
    Trajectory,
)


@dataclass(frozen=True)
class SynthConfig:
    rows: int = 6
    cols: int = 6
    aoi_count: int = 5
    trajectories_per_courier: int = 8
    packages_per_trajectory: int = 10
    road_merge_probability: float = 0.3
    seed: int = 3047
    # Optional commute from a shared depot to the first package. Off by
    # default so the ground truth attains exactly zero switches.
    depot_commute: bool = False

    def validate(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise InputError("grid dimensions must be positive")
        if not 1 <= self.aoi_count <= self.rows * self.cols:
            raise InputError(f"aoi_count must be in [1, {self.rows * self.cols}]")
        if not 0.0 <= self.road_merge_probability <= 1.0:
            raise InputError("road_merge_probability must lie in [0, 1]")
        if self.trajectories_per_courier < 1 or self.packages_per_trajectory < 1:
            raise InputError("per-courier counts must be positive")


@dataclass(frozen=True)
class SyntheticInstance:
    ground_truth: SegmentationMap
    trajectories: tuple[Trajectory, ...]
    packages: tuple[tuple[GridCoord, ...], ...]  # per courier
    road_partition: SegmentationMap
    seed: int
    courier_of_trajectory: tuple[int, ...] = field(default=())

    @property
    def rows(self) -> int:
        return self.ground_truth.rows

    @property
    def cols(self) -> int:
        return self.ground_truth.cols

    def all_packages(self) -> list[GridCoord]:
        return [p for courier in self.packages for p in courier]


def generate_aois(config: SynthConfig) -> SegmentationMap:
    """Grow exactly K 4-connected AOIs covering the grid.

    K seed cells are drawn uniformly, then regions grow by randomized
    multi-source BFS: repeatedly pick a random (region cell -> unassigned
    neighbor) expansion candidate and claim the neighbor. Connectivity
    holds by construction. The result is canonical.
    """
    config.validate()
    rows, cols, k = config.rows, config.cols, config.aoi_count
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xA01]))
    labels = np.full((rows, cols), -1, dtype=np.int64)
    seeds = rng.choice(rows * cols, size=k, replace=False)
    frontier: list[tuple[int, int, int]] = []  # (row, col, label)

    def push_neighbors(r: int, c: int, lab: int) -> None:
        for dr, dc in DELTAS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and labels[nr, nc] < 0:
                frontier.append((nr, nc, lab))

    for lab, cell in enumerate(seeds):
        r, c = divmod(int(cell), cols)
        labels[r, c] = lab
        push_neighbors(r, c, lab)

    remaining = rows * cols - k
    while remaining:
        idx = int(rng.integers(len(frontier)))
        frontier[idx], frontier[-1] = frontier[-1], frontier[idx]
        r, c, lab = frontier.pop()
        if labels[r, c] >= 0:
            continue
        labels[r, c] = lab
        remaining -= 1
        push_neighbors(r, c, lab)
    return SegmentationMap(labels).canonical()


def _manhattan(a: GridCoord, b: GridCoord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _tour_length(order: Sequence[GridCoord]) -> int:
    return sum(_manhattan(a, b) for a, b in zip(order, order[1:]))


def nearest_neighbor_order(packages: Sequence[GridCoord]) -> list[GridCoord]:
    """Greedy open tour from packages[0]; distance ties keep list order."""
    todo = list(packages[1:])
    tour = [packages[0]]
    while todo:
        cur = tour[-1]
        best = min(range(len(todo)), key=lambda i: _manhattan(cur, todo[i]))
        tour.append(todo.pop(best))
    return tour


def two_opt(order: Sequence[GridCoord]) -> list[GridCoord]:
    """First-improvement 2-opt on an open tour with a fixed start."""
    tour = list(order)
    n = len(tour)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                before = _manhattan(tour[i - 1], tour[i])
                after = _manhattan(tour[i - 1], tour[j])
                if j + 1 < n:
                    before += _manhattan(tour[j], tour[j + 1])
                    after += _manhattan(tour[i], tour[j + 1])
                if after < before:
                    tour[i : j + 1] = reversed(tour[i : j + 1])
                    improved = True
    return tour


def _bfs_path(start: GridCoord, goal: GridCoord, allowed: set[GridCoord]) -> list[GridCoord]:
    """Shortest 4-neighbor path inside ``allowed``, deterministic expansion."""
    if start == goal:
        return [start]
    parent: dict[GridCoord, GridCoord] = {start: start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for dr, dc in DELTAS:
            nxt = (cur[0] + dr, cur[1] + dc)
            if nxt in allowed and nxt not in parent:
                parent[nxt] = cur
                if nxt == goal:
                    path = [nxt]
                    while path[-1] != start:
                        path.append(parent[path[-1]])
                    return path[::-1]
                queue.append(nxt)
    raise InputError(f"no path from {start} to {goal} within the AOI")


def generate_trajectory(
    aoi_cells: Sequence[GridCoord],
    packages: Sequence[GridCoord],
    rows: int,
    cols: int,
    seed: int = 0,
) -> Trajectory:
    """Courier trajectory visiting every package once.

    Stop order comes from nearest-neighbor construction plus 2-opt
    improvement on Manhattan distance; consecutive stops are joined by BFS
    shortest paths that stay inside the AOI. Deterministic in its inputs
    (the seed is accepted for interface stability; the heuristic itself is
    tie-broken deterministically).
    """
    del seed
    if not packages:
        raise InputError("packages must be non-empty")
    allowed = {(int(r), int(c)) for r, c in aoi_cells}
    for p in packages:
        if (int(p[0]), int(p[1])) not in allowed:
            raise InputError(f"package {p} lies outside the courier's AOI")
    order = two_opt(nearest_neighbor_order([(int(r), int(c)) for r, c in packages]))
    walk: list[GridCoord] = [order[0]]
    for stop in order[1:]:
        leg = _bfs_path(walk[-1], stop, allowed)
        walk.extend(leg[1:])
    flat = [r * cols + c for r, c in walk]
    collapsed = [flat[0]]
    for idx in flat[1:]:
        if idx != collapsed[-1]:
            collapsed.append(idx)
    return Trajectory(collapsed)


class _DisjointSet:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def adjacent_label_pairs(seg: SegmentationMap) -> list[tuple[int, int]]:
    """Sorted (a, b) pairs of labels that share a 4-adjacent cell boundary."""
    lab = seg.labels
    pairs = set()
    v = np.stack([lab[:-1, :].ravel(), lab[1:, :].ravel()], axis=1)
    h = np.stack([lab[:, :-1].ravel(), lab[:, 1:].ravel()], axis=1)
    for a, b in np.concatenate([v, h]):
        if a != b:
            pairs.add((int(min(a, b)), int(max(a, b))))
    return sorted(pairs)


def derive_road_partition(ground_truth: SegmentationMap, p_m: float, seed: int) -> SegmentationMap:
    """Coarsen the ground truth by merging adjacent AOI pairs with
    probability ``p_m`` each; every output AOI is a union of ground-truth
    AOIs and stays connected (merges only join adjacent regions)."""
    if not 0.0 <= p_m <= 1.0:
        raise InputError("merge probability must lie in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0AD]))
    dsu = _DisjointSet(int(x) for x in ground_truth.labels_present())
    for a, b in adjacent_label_pairs(ground_truth):
        if rng.random() < p_m:
            dsu.union(a, b)
    # representative = smallest label of each merged group, so p_m = 0 is the
    # exact identity and every output AOI is a union of input AOIs
    lut = np.zeros(int(ground_truth.labels.max()) + 1, dtype=np.int64)
    for lab in ground_truth.labels_present():
        lut[int(lab)] = dsu.find(int(lab))
    return SegmentationMap(lut[ground_truth.labels])


def generate_instance(config: SynthConfig) -> SyntheticInstance:
    """Full benchmark instance: AOIs, per-courier packages and trajectories,
    and a coarse road partition. Bit-identical for identical configs."""
    config.validate()
    truth = generate_aois(config)
    road = derive_road_partition(truth, config.road_merge_probability, config.seed)
    k = truth.num_labels()
    courier_seeds = np.random.SeedSequence([config.seed, 0xC0]).spawn(k)

    depot: GridCoord | None = None
    if config.depot_commute:
        depot = (0, 0)

    all_packages: list[tuple[GridCoord, ...]] = []
    trajectories: list[Trajectory] = []
    courier_of: list[int] = []
    for courier in range(k):
        rng = np.random.default_rng(courier_seeds[courier])
        cells = [(int(r), int(c)) for r, c in np.argwhere(truth.labels == courier)]
        courier_packages: list[GridCoord] = []
        for _ in range(config.trajectories_per_courier):
            count = min(config.packages_per_trajectory, len(cells))
            picks = rng.choice(len(cells), size=count, replace=False)
            packages = [cells[int(i)] for i in picks]
            courier_packages.extend(packages)
            traj = generate_trajectory(cells, packages, config.rows, config.cols)
            if depot is not None and depot != packages[0]:
                whole_grid = {
                    (r, c) for r in range(config.rows) for c in range(config.cols)
                }
                commute = _bfs_path(depot, packages[0], whole_grid)
                flat = [r * config.cols + c for r, c in commute[:-1]]
                traj = Trajectory(list(flat) + list(traj.cells))
            trajectories.append(traj)
            courier_of.append(courier)
        all_packages.append(tuple(courier_packages))
    return SyntheticInstance(
        ground_truth=truth,
        trajectories=tuple(trajectories),
        packages=tuple(all_packages),
        road_partition=road,
        seed=config.seed,
        courier_of_trajectory=tuple(courier_of),
    )


def with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    return replace(config, seed=seed)
