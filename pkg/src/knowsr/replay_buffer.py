"""Bounded FIFO experience store."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env_mpe import Transition
from .errors import InsufficientDataError, ParameterError

DEFAULT_CAPACITY = 1_000_000


class ReplayBuffer:
    """Ring of transitions; once full, each push overwrites the oldest entry."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ParameterError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._cursor] = t
        self._cursor = (self._cursor + 1) % self.capacity

    def items(self) -> list[Transition]:
        """Contents from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._cursor:] + self._items[: self._cursor]

    def sample(self, n: int, rng) -> list[Transition]:
        """``n`` distinct transitions drawn uniformly; ``rng`` is a seed or Generator."""
        if n < 1:
            raise ParameterError("sample size must be >= 1")
        if n > len(self._items):
            raise InsufficientDataError(f"asked for {n} transitions, buffer holds {len(self._items)}")
        rng = np.random.default_rng(rng)
        idx = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in idx]


def ordered_chunks(batch: Sequence, chunk_size: int) -> list[list]:
    """Split ``batch`` into consecutive slices of ``chunk_size`` (last may be short)."""
    if chunk_size < 1:
        raise ParameterError("chunk_size must be >= 1")
    return [list(batch[i:i + chunk_size]) for i in range(0, len(batch), chunk_size)]


@dataclass
class Batch:
    """Transitions stacked into arrays with a leading batch axis."""

    obs: np.ndarray  # (B, N, obs_dim)
    actions: np.ndarray  # (B, N, 5)
    rewards: np.ndarray  # (B, N)
    next_obs: np.ndarray  # (B, N, obs_dim)
    done: np.ndarray  # (B,)

    def __len__(self) -> int:
        return self.obs.shape[0]


def stack(transitions: Sequence[Transition]) -> Batch:
    if isinstance(transitions, Batch):
        return transitions
    return Batch(
        np.stack([t.obs for t in transitions]),
        np.stack([t.actions for t in transitions]),
        np.stack([t.rewards for t in transitions]),
        np.stack([t.next_obs for t in transitions]),
        np.array([t.done for t in transitions], dtype=np.float64),
    )
