"""The AOI segmentation environment.

An episode makes one merge decision per border cell, sweeping the border
row-major T times. Actions merge the target cell into the AOI of one of
its four neighbors (or keep it). Legality enforces the validity invariant:
a directional move is allowed only when removing the target from its
current AOI leaves that AOI empty or still 4-connected, so every map an
episode produces stays valid.

Rewards combine the drop in total trajectory switches with the gain in
similarity to the road partition:

    r = k1 * (switches_before - switches_after)
      + k2 * (CR_after - CR_before)

where CR is the Co-AOI rate against the road partition. The environment
keeps both quantities incrementally (per-cell incident transition weights
and a label/road contingency table), so a step costs O(1); the pure
``reward`` function recomputes everything from scratch and serves as the
reference implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import IllegalActionError, InputError
from .grid import (
    DELTAS,
    GridCoord,
    OPPOSITE,
    SegmentationMap,
    TransferGraph,
    Trajectory,
    _mask_connected,
    border_cells,
)
from .metrics import co_aoi_rate, total_switches

# Action encoding: directions first (matching grid direction order), then stay.
ACTION_UP, ACTION_DOWN, ACTION_LEFT, ACTION_RIGHT, ACTION_ORIGIN = range(5)
N_ACTIONS = 5
ACTION_NAMES = ("up", "down", "left", "right", "origin")

STATE_CHANNELS = 7

# A policy maps (state, legal mask) to an action index and must respect
# the mask.
Policy = Callable[[np.ndarray, np.ndarray], int]


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the trajectory term (k1) and the road term (k2)."""

    k1: float = 0.6
    k2: float = 0.4

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise InputError("reward weights must be positive")


@dataclass
class Transition:
    """One environment step, the replay unit of DDQN training.

    ``next_legal`` carries the legal-action mask of ``next_state`` so the
    TD target can restrict its argmax without reconstructing the map.
    ``target_q_cache`` is trainer scratch: target-network Q-values of
    ``next_state``, tagged with the target sync epoch they belong to.
    """

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    next_legal: np.ndarray
    target_q_cache: tuple[int, np.ndarray] | None = None


@dataclass(frozen=True)
class EnvInstance:
    """Everything an episode needs: where to start, the trajectory
    evidence, and the road partition."""

    initial: SegmentationMap
    graph: TransferGraph
    road: SegmentationMap
    trajectories: tuple[Trajectory, ...]

    @staticmethod
    def from_synthetic(instance, init: str = "singletons") -> "EnvInstance":
        """Build from a SyntheticInstance.

        ``init`` picks the starting segmentation: "singletons" (default,
        every cell its own AOI), "road" (the road partition) or "truth".
        """
        from .grid import build_transfer_graph

        rows, cols = instance.rows, instance.cols
        if init == "singletons":
            start = SegmentationMap.singletons(rows, cols)
        elif init == "road":
            start = instance.road_partition
        elif init == "truth":
            start = instance.ground_truth
        else:
            raise InputError(f"unknown initial segmentation {init!r}")
        graph = build_transfer_graph(instance.trajectories, rows, cols)
        return EnvInstance(
            initial=start,
            graph=graph,
            road=instance.road_partition,
            trajectories=tuple(instance.trajectories),
        )

    @property
    def rows(self) -> int:
        return self.initial.rows

    @property
    def cols(self) -> int:
        return self.initial.cols


def build_state(
    seg: SegmentationMap,
    target: GridCoord,
    graph: TransferGraph,
    road: SegmentationMap,
) -> np.ndarray:
    """Assemble the 7-channel state raster.

    ch0 one-hot target; ch1 AOI labels / (max label + 1); ch2-5 directional
    transition counts / global max weight (all zero for an empty graph);
    ch6 road labels / (max road label + 1).
    """
    rows, cols = seg.rows, seg.cols
    if graph.rows != rows or graph.cols != cols or road.shape != seg.shape:
        raise InputError("state inputs disagree on grid dimensions")
    if not (0 <= target[0] < rows and 0 <= target[1] < cols):
        raise InputError(f"target {target} out of bounds")
    state = np.zeros((STATE_CHANNELS, rows, cols), dtype=np.float64)
    state[0, target[0], target[1]] = 1.0
    state[1] = seg.labels / (int(seg.labels.max()) + 1)
    maxw = graph.max_weight()
    if maxw > 0:
        for d in range(4):
            state[2 + d] = graph.weight[:, :, d] / maxw
    state[6] = road.labels / (int(road.labels.max()) + 1)
    return state


def _legal_actions_on(labels: np.ndarray, target: GridCoord) -> np.ndarray:
    rows, cols = labels.shape
    r, c = target
    legal = np.zeros(N_ACTIONS, dtype=bool)
    legal[ACTION_ORIGIN] = True
    own = labels[r, c]
    mask = labels == own
    if int(mask.sum()) == 1:
        removal_ok = True
    else:
        without = mask.copy()
        without[r, c] = False
        removal_ok = _mask_connected(without)
    if removal_ok:
        for d, (dr, dc) in enumerate(DELTAS):
            nr, nc = r + dr, c + dc
            legal[d] = 0 <= nr < rows and 0 <= nc < cols
    return legal


def legal_actions(seg: SegmentationMap, target: GridCoord) -> np.ndarray:
    """Boolean mask over the 5 actions.

    Origin is always legal. A directional action is legal iff the neighbor
    exists and removing the target from its current AOI leaves that AOI
    empty or still 4-connected.
    """
    if not (0 <= target[0] < seg.rows and 0 <= target[1] < seg.cols):
        raise InputError(f"target {target} out of bounds")
    return _legal_actions_on(seg.labels, target)


def apply_action(seg: SegmentationMap, target: GridCoord, action: int) -> SegmentationMap:
    """Apply a legal action; directional moves adopt the neighbor's label."""
    legal = legal_actions(seg, target)
    if not (0 <= action < N_ACTIONS) or not legal[action]:
        raise IllegalActionError(
            f"action {ACTION_NAMES[action] if 0 <= action < N_ACTIONS else action} "
            f"is illegal at {target}"
        )
    if action == ACTION_ORIGIN:
        return seg
    dr, dc = DELTAS[action]
    new_label = int(seg.labels[target[0] + dr, target[1] + dc])
    if new_label == int(seg.labels[target]):
        return seg
    return seg.with_cell(target, new_label)


def reward(
    prev_seg: SegmentationMap,
    next_seg: SegmentationMap,
    trajectories: Sequence[Trajectory],
    road: SegmentationMap,
    weights: RewardWeights,
) -> float:
    """Reference reward: full recomputation of both objective terms."""
    if prev_seg.shape != next_seg.shape or prev_seg.shape != road.shape:
        raise InputError("maps disagree on dimensions")
    d_switch = total_switches(prev_seg, trajectories) - total_switches(next_seg, trajectories)
    d_cr = co_aoi_rate(road, next_seg) - co_aoi_rate(road, prev_seg)
    return weights.k1 * d_switch + weights.k2 * d_cr


class ObjectiveTracker:
    """Incremental bookkeeping of total switches and Co-AOI rate for
    single-cell relabelings.

    Only transitions incident to the moved cell can change the switch
    count, and only cell pairs involving the moved cell can change the
    pair counts, so both deltas are O(1) given the precomputed incident
    weights and the label/road contingency table.
    """

    def __init__(
        self,
        seg: SegmentationMap,
        graph: TransferGraph,
        road: SegmentationMap,
        weights: RewardWeights,
    ):
        if graph.rows != seg.rows or graph.cols != seg.cols or road.shape != seg.shape:
            raise InputError("tracker inputs disagree on grid dimensions")
        self.rows, self.cols = seg.rows, seg.cols
        self.weights = weights
        self.labels = seg.labels.astype(np.int64)

        w = graph.weight
        inc = w.astype(np.int64).copy()
        inc[1:, :, 0] += w[:-1, :, 1]   # into cell from above
        inc[:-1, :, 1] += w[1:, :, 0]   # from below
        inc[:, 1:, 2] += w[:, :-1, 3]   # from the left
        inc[:, :-1, 3] += w[:, 1:, 2]   # from the right
        self._inc = inc

        lab = self.labels
        sw = 0
        sw += int(w[1:, :, 0][lab[1:, :] != lab[:-1, :]].sum())
        sw += int(w[:-1, :, 1][lab[:-1, :] != lab[1:, :]].sum())
        sw += int(w[:, 1:, 2][lab[:, 1:] != lab[:, :-1]].sum())
        sw += int(w[:, :-1, 3][lab[:, :-1] != lab[:, 1:]].sum())
        self.switches = sw

        _, road_idx = np.unique(road.labels.ravel(), return_inverse=True)
        self._road_idx = road_idx.reshape(road.shape)
        n_road = int(road_idx.max()) + 1
        road_counts = np.bincount(road_idx, minlength=n_road).astype(np.int64)
        self._cr_denominator = int((road_counts * (road_counts - 1) // 2).sum())
        if self._cr_denominator == 0:
            raise InputError("road partition has no equivalent pairs; CR undefined")

        max_label = int(self.labels.max())
        cont = np.zeros((max_label + 1, n_road), dtype=np.int64)
        np.add.at(cont, (self.labels.ravel(), road_idx), 1)
        self._cont = cont
        self.tp = int((cont * (cont - 1) // 2).sum())

    @property
    def cr(self) -> float:
        return self.tp / self._cr_denominator

    def deltas(self, cell: GridCoord, new_label: int) -> tuple[int, int]:
        """(switch delta, TP delta) if ``cell`` were relabeled."""
        r, c = cell
        old = int(self.labels[r, c])
        if new_label == old:
            return 0, 0
        d_sw = 0
        for d, (dr, dc) in enumerate(DELTAS):
            nr, nc = r + dr, c + dc
            if 0 <= nr < self.rows and 0 <= nc < self.cols:
                nl = self.labels[nr, nc]
                d_sw += int(self._inc[r, c, d]) * (int(new_label != nl) - int(old != nl))
        ri = self._road_idx[r, c]
        d_tp = int(self._cont[new_label, ri]) - (int(self._cont[old, ri]) - 1)
        return d_sw, d_tp

    def reward_for(self, cell: GridCoord, new_label: int) -> float:
        d_sw, d_tp = self.deltas(cell, new_label)
        return self.weights.k1 * (-d_sw) + self.weights.k2 * (d_tp / self._cr_denominator)

    def move(self, cell: GridCoord, new_label: int) -> float:
        """Relabel ``cell`` and return the reward of the move."""
        r, c = cell
        old = int(self.labels[r, c])
        if new_label == old:
            return 0.0
        d_sw, d_tp = self.deltas(cell, new_label)
        ri = self._road_idx[r, c]
        self._cont[old, ri] -= 1
        self._cont[new_label, ri] += 1
        self.switches += d_sw
        self.tp += d_tp
        self.labels[r, c] = new_label
        return self.weights.k1 * (-d_sw) + self.weights.k2 * (d_tp / self._cr_denominator)

    def segmentation(self) -> SegmentationMap:
        return SegmentationMap(self.labels.copy())


class _StateBuilder:
    """Per-episode state assembly with the static channels precomputed."""

    def __init__(self, instance: EnvInstance):
        rows, cols = instance.rows, instance.cols
        self._template = np.zeros((STATE_CHANNELS, rows, cols), dtype=np.float64)
        maxw = instance.graph.max_weight()
        if maxw > 0:
            for d in range(4):
                self._template[2 + d] = instance.graph.weight[:, :, d] / maxw
        self._template[6] = instance.road.labels / (int(instance.road.labels.max()) + 1)

    def state(self, labels: np.ndarray, target: GridCoord) -> np.ndarray:
        out = self._template.copy()
        out[0, target[0], target[1]] = 1.0
        out[1] = labels / (int(labels.max()) + 1)
        return out


class EpisodeDriver:
    """Runs one episode: T row-major border sweeps with per-step rewards.

    ``steps`` is a generator so that a trainer can learn after every
    transition; ``final_map``, ``episode_return`` and the tracker totals
    are available once the generator is exhausted.
    """

    def __init__(self, instance: EnvInstance, weights: RewardWeights):
        self.instance = instance
        self.weights = weights
        self.tracker = ObjectiveTracker(instance.initial, instance.graph, instance.road, weights)
        self._builder = _StateBuilder(instance)
        self.episode_return = 0.0

    def steps(
        self,
        policy: Policy,
        traversals: int,
        stop_on_stable_pass: bool = False,
    ) -> Iterator[Transition]:
        """Yield each Transition once its successor state is known; the
        final transition of the episode is marked terminal.

        Each pass recomputes the border cells of the current map and
        visits them row-major. With ``stop_on_stable_pass`` the episode
        ends early after a pass that changed no label. A map whose border
        is empty on every pass yields nothing.
        """
        if traversals < 1:
            raise InputError("traversals must be >= 1")
        tracker, builder = self.tracker, self._builder
        labels = tracker.labels
        pending: tuple[np.ndarray, int, float] | None = None
        last_target: GridCoord | None = None

        for _ in range(traversals):
            border = border_cells(SegmentationMap(labels.copy()))
            changed = False
            for target in border:
                state = builder.state(labels, target)
                legal = _legal_actions_on(labels, target)
                action = int(policy(state, legal))
                if not (0 <= action < N_ACTIONS) or not legal[action]:
                    raise IllegalActionError(
                        f"policy returned illegal action {action} at {target}"
                    )
                if action == ACTION_ORIGIN:
                    step_reward = 0.0
                else:
                    dr, dc = DELTAS[action]
                    new_label = int(labels[target[0] + dr, target[1] + dc])
                    changed = changed or new_label != int(labels[target[0], target[1]])
                    step_reward = tracker.move(target, new_label)
                self.episode_return += step_reward
                if pending is not None:
                    yield Transition(
                        state=pending[0],
                        action=pending[1],
                        reward=pending[2],
                        next_state=state,
                        terminal=False,
                        next_legal=legal,
                    )
                pending = (state, action, step_reward)
                last_target = target
            if stop_on_stable_pass and not changed:
                break

        if pending is not None:
            assert last_target is not None
            yield Transition(
                state=pending[0],
                action=pending[1],
                reward=pending[2],
                next_state=builder.state(labels, last_target),
                terminal=True,
                next_legal=_legal_actions_on(labels, last_target),
            )

    def final_map(self) -> SegmentationMap:
        return self.tracker.segmentation()


def run_episode(
    instance: EnvInstance,
    policy: Policy,
    traversals: int,
    weights: RewardWeights,
    stop_on_stable_pass: bool = False,
) -> tuple[SegmentationMap, list[Transition]]:
    """Run a full episode; returns the final map and all transitions."""
    driver = EpisodeDriver(instance, weights)
    transitions = list(driver.steps(policy, traversals, stop_on_stable_pass))
    return driver.final_map(), transitions
