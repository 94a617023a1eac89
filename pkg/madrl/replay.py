"""
Fixed-capacity ring buffer of joint transitions.

Storage grows by doubling up to the capacity, so a large capacity costs memory
only once it is actually filled.
"""

import logging
from typing import Dict, Tuple

import numpy as np

logger = logging.getLogger(__name__)

INITIAL_ROWS = 1024


class ReplayBuffer:
    """Stores (s, s', a, r) with joint state, joint raw actions and per-agent rewards."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, n_agents: int):
        if capacity < 1:
            raise ValueError("Replay capacity must be at least 1")
        self.capacity = capacity
        rows = min(capacity, INITIAL_ROWS)
        self.states = np.zeros((rows, state_dim))
        self.next_states = np.zeros((rows, state_dim))
        self.actions = np.zeros((rows, action_dim))
        self.rewards = np.zeros((rows, n_agents))
        self.position = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    @property
    def allocated(self) -> int:
        return self.states.shape[0]

    def _reserve(self, rows: int) -> None:
        """Grow storage to hold at least ``rows`` transitions (capped at capacity)."""
        if rows <= self.allocated:
            return
        new_rows = min(self.capacity, max(rows, 2 * self.allocated))
        for name in ("states", "next_states", "actions", "rewards"):
            old = getattr(self, name)
            grown = np.zeros((new_rows, old.shape[1]))
            grown[:old.shape[0]] = old
            setattr(self, name, grown)
        logger.debug(f"Replay storage grown to {new_rows} of {self.capacity} rows")

    def add(self, state: np.ndarray, next_state: np.ndarray, action: np.ndarray,
            reward: np.ndarray) -> None:
        self._reserve(self.position + 1)
        self.states[self.position] = state
        self.next_states[self.position] = next_state
        self.actions[self.position] = action
        self.rewards[self.position] = reward
        self.position = (self.position + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, ...]:
        """Uniform batch without replacement: (s, s', a, r)."""
        if batch_size > self.size:
            raise ValueError(f"Cannot sample {batch_size} transitions from {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self.states[idx], self.next_states[idx], self.actions[idx], self.rewards[idx]

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "states": self.states[:self.size], "next_states": self.next_states[:self.size],
            "actions": self.actions[:self.size], "rewards": self.rewards[:self.size],
            "position": np.array(self.position), "capacity": np.array(self.capacity),
        }

    @classmethod
    def from_arrays(cls, data: Dict[str, np.ndarray]) -> "ReplayBuffer":
        states = data["states"]
        buffer = cls(int(data["capacity"]), states.shape[1], data["actions"].shape[1],
                     data["rewards"].shape[1])
        size = states.shape[0]
        buffer._reserve(size)
        buffer.states[:size] = states
        buffer.next_states[:size] = data["next_states"]
        buffer.actions[:size] = data["actions"]
        buffer.rewards[:size] = data["rewards"]
        buffer.size = size
        buffer.position = int(data["position"])
        return buffer
