"""Ring-buffer experience replay with uniform no-replacement sampling."""

from __future__ import annotations

import numpy as np

from ..env import Transition
from ..errors import InputError


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise InputError("capacity must be positive")
        self.capacity = capacity
        self._store: list[Transition] = []
        self._next = 0

    def push(self, transition: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(transition)
        else:
            self._store[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._store)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample without replacement within the batch."""
        if batch_size > len(self._store):
            raise InputError(f"cannot sample {batch_size} from {len(self._store)} transitions")
        idx = rng.choice(len(self._store), size=batch_size, replace=False)
        return [self._store[int(i)] for i in idx]
