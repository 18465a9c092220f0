import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from utils.constants import BUFFER_LENGTH, OBSERVATION_DIM, ACTION_DIM
from utils.exceptions import InsufficientDataError, ContractViolation

# Initialize logger
logger = logging.getLogger(__name__)

# Initial number of rows allocated; storage doubles up to capacity
INITIAL_ROWS = 4096


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    @classmethod
    def from_transitions(cls, transitions: List[Transition]) -> "TransitionBatch":
        return cls(
            states=np.array([t.state for t in transitions], dtype=np.float64),
            actions=np.array([t.action for t in transitions], dtype=np.float64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_states=np.array([t.next_state for t in transitions], dtype=np.float64),
            dones=np.array([t.done for t in transitions], dtype=np.float64),
        )


class ReplayBuffer:
    """
    FIFO ring buffer of transitions with uniform sampling.

    Rows are allocated lazily so a 1e6-capacity buffer only costs memory
    for the transitions actually stored.
    """

    def __init__(self, capacity: int = BUFFER_LENGTH, state_dim: int = OBSERVATION_DIM,
                 action_dim: int = ACTION_DIM):
        if capacity < 1:
            raise ContractViolation("Buffer capacity must be positive", f"capacity={capacity}")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.cursor = 0
        self.size = 0
        self.pushes = 0
        self._allocate(min(capacity, INITIAL_ROWS))
        logger.info(f"ReplayBuffer initialized with capacity {capacity}")

    def _allocate(self, rows: int):
        old = getattr(self, "_states", None)
        states = np.zeros((rows, self.state_dim))
        actions = np.zeros((rows, self.action_dim))
        rewards = np.zeros(rows)
        next_states = np.zeros((rows, self.state_dim))
        dones = np.zeros(rows)
        if old is not None:
            n = self._states.shape[0]
            states[:n] = self._states
            actions[:n] = self._actions
            rewards[:n] = self._rewards
            next_states[:n] = self._next_states
            dones[:n] = self._dones
        self._states, self._actions, self._rewards = states, actions, rewards
        self._next_states, self._dones = next_states, dones

    def __len__(self):
        return self.size

    def push(self, transition: Transition) -> "ReplayBuffer":
        """Store a transition, evicting the oldest once full."""
        if self.cursor >= self._states.shape[0]:
            self._allocate(min(self.capacity, 2 * self._states.shape[0]))
        i = self.cursor
        self._states[i] = transition.state
        self._actions[i] = transition.action
        self._rewards[i] = transition.reward
        self._next_states[i] = transition.next_state
        self._dones[i] = float(transition.done)
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushes += 1
        return self

    def get(self, index: int) -> Transition:
        """Transition stored at ``index`` positions after the oldest one."""
        if not 0 <= index < self.size:
            raise IndexError(f"Index {index} outside buffer of size {self.size}")
        oldest = self.cursor if self.size == self.capacity else 0
        i = (oldest + index) % self.capacity
        return Transition(self._states[i].copy(), self._actions[i].copy(), float(self._rewards[i]),
                          self._next_states[i].copy(), bool(self._dones[i]))

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < n:
            raise InsufficientDataError("Not enough transitions to sample",
                                        f"requested {n}, stored {self.size}")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        """Draw ``n`` transitions uniformly with replacement."""
        idx = self.sample_indices(n, rng)
        return TransitionBatch(
            states=self._states[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            next_states=self._next_states[idx],
            dones=self._dones[idx],
        )


def buffer_push(buffer: ReplayBuffer, transition: Transition) -> ReplayBuffer:
    return buffer.push(transition)


def buffer_sample(buffer: ReplayBuffer, n: int, rng: np.random.Generator) -> TransitionBatch:
    return buffer.sample(n, rng)
