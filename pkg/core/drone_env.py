import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import gymnasium as gym
from gymnasium import spaces

from core import dynamics
from core.dynamics import DroneState, ScaledAction, DepositionModel, PhysicsParams, WindModel
from utils.constants import (
    OBSERVATION_DIM, ACTION_DIM, ACCELERATION_SLICE, ATTITUDE_LIMIT, THRUST_MAX,
    SIGMA_FLOOR, WAYPOINT_ADVANCE_RADIUS, TERMINAL_VELOCITY, CRASH_HEIGHT,
    OUT_OF_BOUNDS_DISTANCE, MAX_EPISODE_STEPS, REWARD_WEIGHT, DEFAULT_MASS,
    MASS_FLOOR_FRACTION, WORKSPACE_LOW, WORKSPACE_HIGH, FIXED_START
)
from utils.exceptions import ContractViolation
from utils.helpers import as_vector, spawn_rngs

# Initialize logger
logger = logging.getLogger(__name__)

# Waypoints are kept this fraction of the out-of-bounds distance from their predecessor
WAYPOINT_SPACING_FRACTION = 0.8


class TerminationStatus(Enum):
    RUNNING = "Running"
    SUCCESS = "Success"
    CRASH = "Crash"
    OUT_OF_BOUNDS = "OutOfBounds"
    TIMEOUT = "Timeout"

    @property
    def is_terminal(self) -> bool:
        """True when the episode truly ended (bootstrapping stops)."""
        return self in (TerminationStatus.SUCCESS, TerminationStatus.CRASH,
                        TerminationStatus.OUT_OF_BOUNDS)

    @property
    def is_finished(self) -> bool:
        return self is not TerminationStatus.RUNNING


class RewardVariant(Enum):
    DISTANCE = "distance"          # negative Euclidean distance, basic navigation
    EXPONENTIAL = "exponential"    # w_p * exp(-squared distance)


@dataclass
class EpisodeConfig:
    """Waypoints and thresholds of one episode."""
    waypoints: List[np.ndarray]
    waypoint_advance_radius: float = WAYPOINT_ADVANCE_RADIUS
    terminal_velocity_threshold: float = TERMINAL_VELOCITY
    crash_height: float = CRASH_HEIGHT
    out_of_bounds_distance: float = OUT_OF_BOUNDS_DISTANCE
    max_steps: int = MAX_EPISODE_STEPS
    reward_weight: float = REWARD_WEIGHT
    measurement_noise_halfwidth: np.ndarray = field(default_factory=lambda: np.zeros(OBSERVATION_DIM))

    def __post_init__(self):
        self.waypoints = [as_vector(w) for w in self.waypoints]
        self.measurement_noise_halfwidth = as_vector(self.measurement_noise_halfwidth, OBSERVATION_DIM)
        if not self.waypoints:
            raise ContractViolation("An episode needs at least one waypoint")
        if min(self.waypoint_advance_radius, self.terminal_velocity_threshold,
               self.crash_height, self.out_of_bounds_distance) <= 0 or self.max_steps <= 0:
            raise ContractViolation("Episode thresholds must be positive")


@dataclass(frozen=True)
class StageSettings:
    """Environment features switched on by a curriculum stage."""
    stage_id: str
    waypoint_count: int = 1
    randomize_start: bool = False
    reward_variant: RewardVariant = RewardVariant.DISTANCE
    waypoint_bonus: float = 0.0
    deviation_penalty: float = 0.0
    noise_halfwidth: Tuple[float, ...] = (0.0,) * OBSERVATION_DIM
    deposition_active: bool = False
    wind_active: bool = False
    mass_variation: float = 0.0


class NormalizerStats:
    """
    Running per-component mean and standard deviation (Welford).

    Standard deviations below ``sigma_floor`` (including the undefined
    single-sample case) are replaced by the floor.
    """

    def __init__(self, dim: int = OBSERVATION_DIM, sigma_floor: float = SIGMA_FLOOR):
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.count = 0
        self.sigma_floor = sigma_floor
        self.frozen = False

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.mean, self.sigma_floor)
        return np.maximum(np.sqrt(self.m2 / (self.count - 1)), self.sigma_floor)

    def freeze(self) -> "NormalizerStats":
        self.frozen = True
        return self

    def copy(self) -> "NormalizerStats":
        clone = NormalizerStats(self.mean.shape[0], self.sigma_floor)
        clone.mean = self.mean.copy()
        clone.m2 = self.m2.copy()
        clone.count = self.count
        clone.frozen = self.frozen
        return clone

    def state_dict(self, prefix: str = "normalizer.") -> Dict[str, np.ndarray]:
        return {
            f"{prefix}mean": self.mean,
            f"{prefix}m2": self.m2,
            f"{prefix}count": np.array(self.count, dtype=np.int64),
            f"{prefix}sigma_floor": np.array(self.sigma_floor),
        }

    @classmethod
    def from_state_dict(cls, state: Dict[str, np.ndarray], prefix: str = "normalizer.") -> "NormalizerStats":
        mean = np.array(state[f"{prefix}mean"], dtype=np.float64)
        stats = cls(mean.shape[0], float(state[f"{prefix}sigma_floor"]))
        stats.mean = mean
        stats.m2 = np.array(state[f"{prefix}m2"], dtype=np.float64)
        stats.count = int(state[f"{prefix}count"])
        return stats


def update_stats(stats: NormalizerStats, raw_obs: np.ndarray) -> NormalizerStats:
    """One Welford update of ``stats`` with a raw observation."""
    if stats.frozen:
        raise ContractViolation("Normalizer statistics are frozen")
    x = np.asarray(raw_obs, dtype=np.float64)
    stats.count += 1
    delta = x - stats.mean
    stats.mean = stats.mean + delta / stats.count
    stats.m2 = stats.m2 + delta * (x - stats.mean)
    return stats


def normalize(obs: np.ndarray, stats: NormalizerStats) -> np.ndarray:
    """Z-score an observation (or a batch of them) with floored standard deviations."""
    if stats.count < 1:
        raise ContractViolation("Normalizer has no samples")
    return (np.asarray(obs, dtype=np.float64) - stats.mean) / stats.std


def scale_action(raw: np.ndarray) -> ScaledAction:
    """Map a [-1, 1]^3 action to roll/pitch in [-pi/2, pi/2] rad and thrust in [0, 10] N."""
    roll, pitch, thrust = np.clip(as_vector(raw, ACTION_DIM), -1.0, 1.0)
    return ScaledAction(
        roll=float(roll) * ATTITUDE_LIMIT,
        pitch=float(pitch) * ATTITUDE_LIMIT,
        thrust=(float(thrust) + 1.0) / 2.0 * THRUST_MAX,
    )


def unscale_action(action: ScaledAction) -> np.ndarray:
    """Inverse of scale_action on the physical box."""
    return np.array([
        action.roll / ATTITUDE_LIMIT,
        action.pitch / ATTITUDE_LIMIT,
        action.thrust / THRUST_MAX * 2.0 - 1.0,
    ])


def observe(state: DroneState, target: np.ndarray, noise_halfwidth: np.ndarray,
            rng: Optional[np.random.Generator]) -> np.ndarray:
    """
    Assemble the 13-component observation with uniform measurement noise.

    Order: acceleration (3), target minus position (3), velocity (3),
    roll, pitch, yaw, height. The state itself is never perturbed.
    """
    obs = np.concatenate([
        state.acceleration,
        as_vector(target) - state.position,
        state.velocity,
        [state.roll, state.pitch, state.yaw, state.position[2]],
    ])
    halfwidth = as_vector(noise_halfwidth, OBSERVATION_DIM)
    if np.any(halfwidth > 0):
        obs = obs + rng.uniform(-1.0, 1.0, size=OBSERVATION_DIM) * halfwidth
    return obs


def mask_acceleration(obs: np.ndarray) -> np.ndarray:
    masked = np.array(obs, dtype=np.float64, copy=True)
    masked[..., ACCELERATION_SLICE] = 0.0
    return masked


def reward(position: np.ndarray, target: np.ndarray, weight: float) -> float:
    """Exponential proximity reward w_p * exp(-||p - p_target||^2)."""
    if weight <= 0:
        raise ContractViolation("Reward weight must be positive", f"w_p={weight}")
    diff = as_vector(position) - as_vector(target)
    return weight * math.exp(-float(diff @ diff))


def reward_c1(position: np.ndarray, target: np.ndarray) -> float:
    """Basic-navigation reward: negative Euclidean distance to the target."""
    return -float(np.linalg.norm(as_vector(target) - as_vector(position)))


def cross_track_distance(position: np.ndarray, start: np.ndarray, end: np.ndarray) -> float:
    """Distance from ``position`` to the segment start-end."""
    segment = end - start
    length_sq = float(segment @ segment)
    if length_sq == 0.0:
        return float(np.linalg.norm(position - start))
    t = min(max(float((position - start) @ segment) / length_sq, 0.0), 1.0)
    return float(np.linalg.norm(position - (start + t * segment)))


def check_termination(state: DroneState, active_target: np.ndarray, config: EpisodeConfig,
                      step_count: int, last_waypoint: bool) -> TerminationStatus:
    """
    Classify the episode state.

    Precedence: Crash > OutOfBounds > Success > Timeout > Running.
    """
    distance = float(np.linalg.norm(as_vector(active_target) - state.position))
    if state.height < config.crash_height:
        return TerminationStatus.CRASH
    if distance > config.out_of_bounds_distance:
        return TerminationStatus.OUT_OF_BOUNDS
    if (last_waypoint and distance <= config.waypoint_advance_radius
            and state.speed < config.terminal_velocity_threshold):
        return TerminationStatus.SUCCESS
    if step_count >= config.max_steps:
        return TerminationStatus.TIMEOUT
    return TerminationStatus.RUNNING


class DepositionDroneEnv(gym.Env):
    """
    Waypoint-navigation MDP around the deposition flight model.

    ``step`` follows the gymnasium signature; ``info["status"]`` carries the
    TerminationStatus. ``reset`` accepts ``options`` with keys ``stage``
    (StageSettings), ``training`` (bool) and ``waypoints`` (explicit list).
    """

    metadata = {"render_modes": []}

    def __init__(self,
                 stage: StageSettings,
                 physics: PhysicsParams = None,
                 deposition: DepositionModel = None,
                 wind_mean: Sequence[float] = (0.0, 0.0, 0.0),
                 wind_gust: Sequence[float] = (0.0, 0.0, 0.0),
                 base_mass: float = DEFAULT_MASS,
                 mass_floor_fraction: float = MASS_FLOOR_FRACTION,
                 waypoint_advance_radius: float = WAYPOINT_ADVANCE_RADIUS,
                 terminal_velocity: float = TERMINAL_VELOCITY,
                 crash_height: float = CRASH_HEIGHT,
                 out_of_bounds_distance: float = OUT_OF_BOUNDS_DISTANCE,
                 max_steps: int = MAX_EPISODE_STEPS,
                 reward_weight: float = REWARD_WEIGHT,
                 workspace_low: Sequence[float] = WORKSPACE_LOW,
                 workspace_high: Sequence[float] = WORKSPACE_HIGH,
                 fixed_start: Sequence[float] = FIXED_START,
                 observe_acceleration: bool = True,
                 normalizer: Optional[NormalizerStats] = None,
                 training: bool = True,
                 seed: int = 0):
        """
        Initialize the environment.

        Args:
            stage: Stage features for the first episode
            physics: Physical constants (mass floor is set per episode)
            deposition: Material flow parameters; activity follows the stage
            wind_mean, wind_gust: Wind model parameters used when the stage enables wind
            normalizer: Running observation statistics, or None for raw observations
            training: Training mode (random starts, statistics updates) or test mode
            seed: Root seed of the sampling, noise and wind streams
        """
        super().__init__()
        self.stage = stage
        self.physics = physics or PhysicsParams()
        base_deposition = deposition or DepositionModel()
        self._deposition_params = (base_deposition.density, base_deposition.nozzle_diameter,
                                   base_deposition.exit_velocity)
        self.wind_mean = as_vector(wind_mean)
        self.wind_gust = as_vector(wind_gust)
        self.base_mass = base_mass
        self.mass_floor_fraction = mass_floor_fraction
        self.waypoint_advance_radius = waypoint_advance_radius
        self.terminal_velocity = terminal_velocity
        self.crash_height = crash_height
        self.out_of_bounds_distance = out_of_bounds_distance
        self.max_steps = max_steps
        self.reward_weight = reward_weight
        self.workspace_low = as_vector(workspace_low)
        self.workspace_high = as_vector(workspace_high)
        self.fixed_start = as_vector(fixed_start)
        self.observe_acceleration = observe_acceleration
        self.normalizer = normalizer
        self.training = training
        self.record_trajectory = False

        self.observation_space = spaces.Box(-np.inf, np.inf, shape=(OBSERVATION_DIM,), dtype=np.float64)
        self.action_space = spaces.Box(-1.0, 1.0, shape=(ACTION_DIM,), dtype=np.float64)

        self._sample_rng, self._noise_rng, self._wind_rng = spawn_rngs(seed, 3)
        self.state: Optional[DroneState] = None
        self.episode: Optional[EpisodeConfig] = None
        self.status = TerminationStatus.RUNNING
        self._ready = False

        logger.info(f"DepositionDroneEnv initialized (stage={stage.stage_id}, training={training})")

    # ------------------------------------------------------------------
    # Episode bookkeeping
    # ------------------------------------------------------------------
    @property
    def active_target(self) -> np.ndarray:
        return self.episode.waypoints[self.waypoint_index]

    @property
    def on_last_waypoint(self) -> bool:
        return self.waypoint_index == len(self.episode.waypoints) - 1

    @property
    def positional_error(self) -> float:
        return float(np.linalg.norm(self.active_target - self.state.position))

    def _sample_box(self) -> np.ndarray:
        return self._sample_rng.uniform(self.workspace_low, self.workspace_high)

    def _sample_near(self, anchor: np.ndarray) -> np.ndarray:
        """Uniform point in the workspace within reach of ``anchor``."""
        reach = WAYPOINT_SPACING_FRACTION * self.out_of_bounds_distance
        point = self._sample_box()
        distance = float(np.linalg.norm(point - anchor))
        if distance > reach:
            point = anchor + (point - anchor) * (reach / distance)
        return point

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None):
        """
        Start a new episode.

        Returns:
            (observation, info) as in gymnasium
        """
        options = options or {}
        if seed is not None:
            self._sample_rng, self._noise_rng, self._wind_rng = spawn_rngs(seed, 3)
        self.stage = options.get("stage", self.stage)
        self.training = options.get("training", self.training)

        if self.training and self.stage.randomize_start:
            start = self._sample_box()
        else:
            start = self.fixed_start.copy()

        if "waypoints" in options:
            waypoints = [as_vector(w) for w in options["waypoints"]]
        else:
            waypoints, anchor = [], start
            for _ in range(self.stage.waypoint_count):
                anchor = self._sample_near(anchor)
                waypoints.append(anchor)

        mass = self.base_mass
        if self.stage.mass_variation > 0:
            mass *= 1.0 + self._sample_rng.uniform(-self.stage.mass_variation, self.stage.mass_variation)

        self.episode = EpisodeConfig(
            waypoints=waypoints,
            waypoint_advance_radius=self.waypoint_advance_radius,
            terminal_velocity_threshold=self.terminal_velocity,
            crash_height=self.crash_height,
            out_of_bounds_distance=self.out_of_bounds_distance,
            max_steps=self.max_steps,
            reward_weight=self.reward_weight,
            measurement_noise_halfwidth=np.array(self.stage.noise_halfwidth),
        )
        self.episode_physics = self.physics.with_mass_floor(mass, self.mass_floor_fraction)
        density, diameter, exit_velocity = self._deposition_params
        self.deposition = DepositionModel(density, diameter, exit_velocity,
                                          active=self.stage.deposition_active)
        self.wind = None
        if self.stage.wind_active:
            self.wind = WindModel(self.wind_mean, self.wind_gust, rng=self._wind_rng)

        self.state = DroneState.at_rest(start, mass)
        self.start_position = start.copy()
        self.segment_start = start.copy()
        self.waypoint_index = 0
        self.step_count = 0
        self.status = TerminationStatus.RUNNING
        self.trajectory = [self._trajectory_sample()] if self.record_trajectory else []
        self._ready = True

        return self._observation(), self._info()

    def step(self, action):
        """
        Apply one action.

        Returns:
            (observation, reward, terminated, truncated, info)
        """
        if not self._ready:
            raise ContractViolation("Environment must be reset before stepping")
        if self.status.is_finished:
            raise ContractViolation("Episode already terminated", self.status.value)

        command = scale_action(action)
        self.state = dynamics.step(self.state, command, self.episode_physics,
                                   self.deposition, self.wind)
        self.step_count += 1

        bonus = 0.0
        if (not self.on_last_waypoint
                and self.positional_error <= self.episode.waypoint_advance_radius):
            self.segment_start = self.active_target.copy()
            self.waypoint_index += 1
            bonus = self.stage.waypoint_bonus
            logger.debug(f"Waypoint {self.waypoint_index} reached at step {self.step_count}")

        step_reward = self._reward() + bonus
        self.status = check_termination(self.state, self.active_target, self.episode,
                                        self.step_count, self.on_last_waypoint)
        if self.record_trajectory:
            self.trajectory.append(self._trajectory_sample())

        terminated = self.status.is_terminal
        truncated = self.status is TerminationStatus.TIMEOUT
        return self._observation(), step_reward, terminated, truncated, self._info()

    def _reward(self) -> float:
        position, target = self.state.position, self.active_target
        if self.stage.reward_variant is RewardVariant.DISTANCE:
            value = reward_c1(position, target)
        else:
            value = reward(position, target, self.episode.reward_weight)
        if self.stage.deviation_penalty > 0:
            value -= self.stage.deviation_penalty * cross_track_distance(
                position, self.segment_start, target)
        return value

    def raw_observation(self) -> np.ndarray:
        """Noisy, unnormalized observation of the current state."""
        obs = observe(self.state, self.active_target,
                      self.episode.measurement_noise_halfwidth, self._noise_rng)
        if not self.observe_acceleration:
            obs = mask_acceleration(obs)
        return obs

    def _observation(self) -> np.ndarray:
        obs = self.raw_observation()
        if self.normalizer is None:
            return obs
        if self.training and not self.normalizer.frozen:
            update_stats(self.normalizer, obs)
        return normalize(obs, self.normalizer)

    def _trajectory_sample(self) -> Dict[str, float]:
        x, y, z = self.state.position
        return {
            "step": self.step_count,
            "x": float(x), "y": float(y), "z": float(z),
            "mass": float(self.state.mass),
            "waypoint_index": self.waypoint_index,
        }

    def _info(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "step": self.step_count,
            "waypoint_index": self.waypoint_index,
            "positional_error": self.positional_error,
            "mass": self.state.mass,
        }


def env_step(env: DepositionDroneEnv, raw_action: np.ndarray) -> Tuple[np.ndarray, float, TerminationStatus]:
    """Step ``env`` and return (observation, reward, status)."""
    obs, step_reward, _, _, info = env.step(raw_action)
    return obs, step_reward, info["status"]


def make_env(config, stage: StageSettings, normalizer: Optional[NormalizerStats] = None,
             training: bool = True, seed: int = 0) -> DepositionDroneEnv:
    """
    Build an environment from a RunConfig.

    Args:
        config: core.config.RunConfig
        stage: Stage features
        normalizer: Observation statistics, or None for raw observations
        training: Training or test mode
        seed: Root seed of the environment's random streams
    """
    physics = PhysicsParams(
        gravity=config.physics.gravity,
        dt=config.physics.dt,
        attitude_time_constant=config.physics.attitude_time_constant,
        min_mass=config.physics.mass * config.physics.mass_floor_fraction,
    )
    deposition = DepositionModel(
        density=config.deposition.density,
        nozzle_diameter=config.deposition.nozzle_diameter,
        exit_velocity=config.deposition.exit_velocity,
    )
    return DepositionDroneEnv(
        stage=stage,
        physics=physics,
        deposition=deposition,
        wind_mean=config.wind.mean_force,
        wind_gust=config.wind.gust_amplitude,
        base_mass=config.physics.mass,
        mass_floor_fraction=config.physics.mass_floor_fraction,
        waypoint_advance_radius=config.env.waypoint_advance_radius,
        terminal_velocity=config.env.terminal_velocity,
        crash_height=config.env.crash_height,
        out_of_bounds_distance=config.env.out_of_bounds_distance,
        max_steps=config.env.max_steps,
        reward_weight=config.env.reward_weight,
        workspace_low=config.env.workspace_low,
        workspace_high=config.env.workspace_high,
        fixed_start=config.env.fixed_start,
        observe_acceleration=config.env.observe_acceleration,
        normalizer=normalizer,
        training=training,
        seed=seed,
    )
