import math
import logging
from dataclasses import dataclass, field

import numpy as np

from utils.constants import (
    ACTION_DIM, SAMPLE_TIME, MEAN_ATTRACTION, NOISE_STD,
    SMOOTHING_STD, SMOOTHING_STD_MIN, SMOOTHING_LIMIT, SMOOTHING_DECAY_RATE
)

# Initialize logger
logger = logging.getLogger(__name__)


@dataclass
class OUNoiseState:
    """
    Ornstein-Uhlenbeck process for temporally correlated exploration.

    The value is pulled towards ``mean`` with rate ``mean_attraction`` and
    driven by Gaussian increments of scale ``std * sqrt(dt)``.
    """
    value: np.ndarray = field(default_factory=lambda: np.zeros(ACTION_DIM))
    mean_attraction: float = MEAN_ATTRACTION
    std: float = NOISE_STD
    mean: float = 0.0

    def reset(self):
        self.value = np.full_like(self.value, self.mean)


def ou_step(state: OUNoiseState, dt: float, rng: np.random.Generator,
            draw: np.ndarray = None) -> np.ndarray:
    """
    Advance the process one step in place and return the new noise vector.

    Args:
        state: Process state
        dt: Sample time (s)
        rng: Random generator for the Gaussian increment
        draw: Optional explicit standard-normal draw (bypasses ``rng``)
    """
    if draw is None:
        draw = rng.standard_normal(state.value.shape)
    drift = state.mean_attraction * (state.mean - state.value) * dt
    state.value = state.value + drift + state.std * math.sqrt(dt) * draw
    return state.value.copy()


class GaussianNoise:
    """Uncorrelated Gaussian exploration noise."""

    def __init__(self, std: float = NOISE_STD, size: int = ACTION_DIM):
        self.std = std
        self.size = size

    def reset(self):
        pass

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.std * rng.standard_normal(self.size)


class OrnsteinUhlenbeckNoise:
    """Stateful wrapper exposing the same interface as GaussianNoise."""

    def __init__(self, mean_attraction: float = MEAN_ATTRACTION, std: float = NOISE_STD,
                 dt: float = SAMPLE_TIME, size: int = ACTION_DIM):
        self.state = OUNoiseState(np.zeros(size), mean_attraction, std)
        self.dt = dt

    def reset(self):
        self.state.reset()

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return ou_step(self.state, self.dt, rng)


@dataclass
class SmoothingPolicy:
    """Clipped Gaussian noise added to target-policy actions."""
    std: float = SMOOTHING_STD
    std_min: float = SMOOTHING_STD_MIN
    limit: float = SMOOTHING_LIMIT
    decay_rate: float = SMOOTHING_DECAY_RATE

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        noise = self.std * rng.standard_normal(shape)
        return np.clip(noise, -self.limit, self.limit)

    def decay(self):
        """Shrink the standard deviation towards its minimum."""
        self.std = max(self.std * (1.0 - self.decay_rate), self.std_min)
