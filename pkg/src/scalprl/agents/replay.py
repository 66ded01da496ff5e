from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One agent decision.

    ``obs``/``next_obs`` are whatever the featurizer understands: arrays for
    small tests, compact state references during training.  ``q_frozen`` and
    ``next_q_frozen`` optionally cache the frozen network's outputs.
    """

    obs: Any
    lt: float | None
    action: int
    reward: float
    next_obs: Any
    next_lt: float | None
    done: bool
    q_frozen: np.ndarray | None = None
    next_q_frozen: np.ndarray | None = None


class ReplayBuffer:
    """Fixed-capacity ring buffer, oldest entries evicted first, uniform sampling."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list = []
        self._next = 0
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._items)

    def append(self, item) -> None:
        with self._lock:
            if len(self._items) < self.capacity:
                self._items.append(item)
            else:
                self._items[self._next] = item
            self._next = (self._next + 1) % self.capacity

    def extend(self, items) -> None:
        for it in items:
            self.append(it)

    def oldest_first(self) -> list:
        with self._lock:
            if len(self._items) < self.capacity:
                return list(self._items)
            return self._items[self._next:] + self._items[:self._next]

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, len(self._items), size=n)

    def sample(self, n: int, rng: np.random.Generator) -> list:
        with self._lock:
            if not self._items:
                return []
            return [self._items[i] for i in self.sample_indices(n, rng)]
