"""Double-DQN training on the border-cell environment.

Per environment step: push the transition, sample a uniform batch,
minimize the squared TD error with RMSprop, and copy the online network
into the target network every ``target_sync_steps`` gradient steps. The
TD target follows the double-Q rule: the online network picks the best
legal next action, the target network evaluates it. Exploration is
epsilon-greedy with a linear decay over the first half of training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..env import EnvInstance, EpisodeDriver, RewardWeights, Transition
from ..errors import InputError, TrainingError
from ..grid import SegmentationMap
from ..metrics import fmi
from .network import NetworkShape, QNetwork, RMSprop
from .replay import ReplayBuffer


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 500
    lr: float = 1e-4
    lr_decay: float = 0.995
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_end: float = 0.05
    batch_size: int = 16
    buffer_capacity: int = 10000
    target_sync_steps: int = 1000
    seed: int = 3047
    traversals: int = 8
    weights: RewardWeights = field(default_factory=RewardWeights)
    conv_channels: tuple[int, ...] = (16, 32)
    kernel: int = 5
    hidden: int = 128
    loss: str = "mse"  # or "huber"
    huber_delta: float = 1.0
    stop_on_stable_pass: bool = False

    def validate(self) -> None:
        if self.episodes < 0 or self.traversals < 1 or self.target_sync_steps < 1:
            raise InputError("episodes, traversals and target_sync_steps must be valid")
        if not 0.0 <= self.gamma < 1.0:
            raise InputError("gamma must lie in [0, 1)")
        if not (0.0 <= self.eps_end <= self.eps_start <= 1.0):
            raise InputError("need 0 <= eps_end <= eps_start <= 1")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise InputError("invalid learning-rate settings")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise InputError("buffer must hold at least one batch")
        if self.loss not in ("mse", "huber"):
            raise InputError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class EpisodeStats:
    episode: int
    episode_return: float
    fmi: float | None


@dataclass
class TrainResult:
    network: QNetwork
    best_map: SegmentationMap
    curve: list[EpisodeStats]
    final_map: SegmentationMap
    best_episode: int


def epsilon_for(cfg: TrainConfig, episode: int) -> float:
    """Linear decay from eps_start to eps_end over the first half of
    training, constant afterwards."""
    half = max(1, cfg.episodes // 2)
    frac = min(1.0, episode / half)
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def select_action(q: np.ndarray, legal: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over legal actions; exploitation breaks ties toward
    the lowest action index."""
    choices = np.flatnonzero(legal)
    if choices.size == 0:
        raise InputError("no legal action available")
    if rng.random() < eps:
        return int(choices[rng.integers(choices.size)])
    masked = np.where(legal, q, -np.inf)
    return int(np.argmax(masked))


def td_target(transition: Transition, online: QNetwork, target: QNetwork, gamma: float) -> float:
    """Double-DQN target for a single transition."""
    if transition.terminal:
        return float(transition.reward)
    q_online = online.forward_single(transition.next_state)
    masked = np.where(transition.next_legal, q_online, -np.inf)
    best = int(np.argmax(masked))
    q_eval = target.forward_single(transition.next_state)
    return float(transition.reward + gamma * q_eval[best])


def _target_q_batch(
    target: QNetwork, batch: Sequence[Transition], epoch: int
) -> np.ndarray:
    """Target-network Q-values of every next_state, memoized per sync
    epoch on the transitions (the target net is frozen between syncs, so
    cached values are exactly what a fresh forward would produce)."""
    stale = [t for t in batch if t.target_q_cache is None or t.target_q_cache[0] != epoch]
    if stale:
        fresh = target.forward(np.stack([t.next_state for t in stale]))
        for t, q in zip(stale, fresh):
            t.target_q_cache = (epoch, q)
    return np.stack([t.target_q_cache[1] for t in batch])


def _learn_batch(
    online: QNetwork,
    target: QNetwork,
    optimizer: RMSprop,
    batch: Sequence[Transition],
    cfg: TrainConfig,
    target_epoch: int = -1,
) -> float:
    states = np.stack([t.state for t in batch])
    next_states = np.stack([t.next_state for t in batch])
    actions = np.array([t.action for t in batch], dtype=np.int64)
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    live = np.array([0.0 if t.terminal else 1.0 for t in batch])
    next_legal = np.stack([t.next_legal for t in batch])

    q_next_online = online.forward(next_states)
    q_next_target = _target_q_batch(target, batch, target_epoch)
    masked = np.where(next_legal, q_next_online, -np.inf)
    best_next = np.argmax(masked, axis=1)
    rows = np.arange(len(batch))
    y = rewards + cfg.gamma * q_next_target[rows, best_next] * live

    q, cache = online.forward_cached(states)
    td = q[rows, actions] - y
    if cfg.loss == "mse":
        loss = float(np.mean(td * td))
        dpred = 2.0 * td / len(batch)
    else:
        delta = cfg.huber_delta
        small = np.abs(td) <= delta
        loss = float(np.mean(np.where(small, 0.5 * td * td, delta * (np.abs(td) - 0.5 * delta))))
        dpred = np.where(small, td, delta * np.sign(td)) / len(batch)
    dq = np.zeros_like(q)
    dq[rows, actions] = dpred
    grads = online.backward(cache, dq)
    optimizer.step(online.params, grads)
    return loss


def train(
    instance: EnvInstance,
    cfg: TrainConfig,
    truth: SegmentationMap | None = None,
) -> TrainResult:
    """Run the full DDQN training loop on one environment instance.

    Deterministic in cfg.seed (single-threaded). The best map is the final
    map of the highest-return episode (earliest on ties); with zero
    episodes the initialized network and the initial map come back as is.
    """
    cfg.validate()
    shape = NetworkShape(
        rows=instance.rows,
        cols=instance.cols,
        conv_channels=cfg.conv_channels,
        kernel=cfg.kernel,
        hidden=cfg.hidden,
    )
    online = QNetwork(shape, seed=cfg.seed)
    target = online.clone()
    optimizer = RMSprop(online.n_params, lr=cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xDD9]))

    curve: list[EpisodeStats] = []
    best_return = -np.inf
    best_map = instance.initial
    best_episode = -1
    final_map = instance.initial
    grad_steps = 0
    target_epoch = 0

    for episode in range(cfg.episodes):
        eps = epsilon_for(cfg, episode)
        optimizer.lr = cfg.lr * cfg.lr_decay**episode
        driver = EpisodeDriver(instance, cfg.weights)

        def policy(state, legal, _eps=eps):
            if rng.random() < _eps:
                choices = np.flatnonzero(legal)
                return int(choices[rng.integers(choices.size)])
            q = online.forward_single(state)
            return int(np.argmax(np.where(legal, q, -np.inf)))

        for transition in driver.steps(policy, cfg.traversals, cfg.stop_on_stable_pass):
            buffer.push(transition)
            if len(buffer) >= cfg.batch_size:
                loss = _learn_batch(
                    online, target, optimizer,
                    buffer.sample(cfg.batch_size, rng), cfg, target_epoch,
                )
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at episode {episode}, gradient step {grad_steps}"
                    )
                grad_steps += 1
                if grad_steps % cfg.target_sync_steps == 0:
                    target.copy_params_from(online)
                    target_epoch += 1

        final_map = driver.final_map()
        score = None if truth is None else fmi(truth, final_map)
        curve.append(EpisodeStats(episode, driver.episode_return, score))
        if driver.episode_return > best_return:
            best_return = driver.episode_return
            best_map = final_map
            best_episode = episode

    return TrainResult(
        network=online,
        best_map=best_map,
        curve=curve,
        final_map=final_map,
        best_episode=best_episode,
    )


def with_weights(cfg: TrainConfig, k1: float, k2: float) -> TrainConfig:
    return replace(cfg, weights=RewardWeights(k1, k2))
