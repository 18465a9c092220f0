import os
import json
import math
import logging
from dataclasses import dataclass, field, asdict, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.config import RunConfig
from core.curriculum import stage_config
from core.drone_env import DepositionDroneEnv, NormalizerStats, TerminationStatus, make_env
from utils.constants import (
    GRAVITY, DEFAULT_MASS, ATTITUDE_LIMIT, THRUST_MAX, ACTION_DIM,
    TRIALS_FILE, ERRORS_FILE, SUMMARY_FILE, TRAJECTORY_FILE
)
from utils.exceptions import ContractViolation, InsufficientDataError, wrap_export_errors
from utils.helpers import atomic_write_text, dump_json, ensure_directory, make_rng, write_csv

# Initialize logger
logger = logging.getLogger(__name__)

# Column order of the per-trial table
TRIAL_COLUMNS = ["trial", "seed", "status", "steps", "cumulative_reward", "positional_error"]
ERROR_COLUMNS = ["trial", "positional_error"]


@dataclass
class TrialRecord:
    """
    Outcome of one evaluation episode.

    ``positional_error`` is the distance (m) from the final position to the
    last waypoint of the episode, whichever waypoint was active at the end;
    ``trajectory`` holds per-step samples when recorded.
    """
    trial: int
    seed: int
    status: str
    steps: int
    cumulative_reward: float
    positional_error: float
    waypoints: List[List[float]] = field(default_factory=list)
    trajectory: List[Dict[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.positional_error < 0 or not math.isfinite(self.cumulative_reward):
            raise ContractViolation("Invalid trial record",
                                    f"error={self.positional_error}, reward={self.cumulative_reward}")

    @property
    def succeeded(self) -> bool:
        return self.status == TerminationStatus.SUCCESS.value

    def to_row(self) -> Dict[str, Any]:
        return {column: getattr(self, column) for column in TRIAL_COLUMNS}


@dataclass
class MetricsSummary:
    """Aggregate evaluation metrics; success ratio is a percentage."""
    trials: int
    average_reward: float
    reward_std: float
    average_positional_error: float
    precision: float
    success_ratio: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def format(self) -> str:
        return (f"Trials: {self.trials}\n"
                f"Average cumulative reward: {self.average_reward:.4f}\n"
                f"Reward std: {self.reward_std:.4f}\n"
                f"Average positional error: {self.average_positional_error:.4f} m\n"
                f"Precision (error std): {self.precision:.4f} m\n"
                f"Success ratio: {self.success_ratio:.1f}%")


class ProportionalController:
    """
    Scripted PD waypoint controller on raw (unnormalized) observations.

    Desired acceleration is ``kp * (target - position) - kd * velocity``; tilt
    and thrust are solved for it with a nominal mass, so mass changes show up
    as a steady vertical offset.
    """

    def __init__(self, kp: float = 1.5, kd: float = 2.5, max_tilt: float = 0.5,
                 max_vertical: float = 3.0, mass: float = DEFAULT_MASS, gravity: float = GRAVITY):
        self.kp = kp
        self.kd = kd
        self.max_tilt = max_tilt
        self.max_vertical = max_vertical
        self.mass = mass
        self.gravity = gravity

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        delta, velocity = obs[3:6], obs[6:9]
        ax, ay, az = self.kp * delta - self.kd * velocity
        az = float(np.clip(az, -self.max_vertical, self.max_vertical))
        lift = self.gravity + az
        pitch = float(np.clip(math.atan2(ax, lift), -self.max_tilt, self.max_tilt))
        roll = float(np.clip(math.atan(-ay * math.cos(pitch) / lift), -self.max_tilt, self.max_tilt))
        thrust = self.mass * lift / (math.cos(roll) * math.cos(pitch))
        return np.clip([roll / ATTITUDE_LIMIT, pitch / ATTITUDE_LIMIT,
                        2.0 * thrust / THRUST_MAX - 1.0], -1.0, 1.0)


class HoverPolicy:
    """Level attitude with exactly the hover thrust of a given mass."""

    def __init__(self, mass: float = DEFAULT_MASS, gravity: float = GRAVITY):
        self.action = np.array([0.0, 0.0, 2.0 * mass * gravity / THRUST_MAX - 1.0])

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return self.action.copy()


class RandomPolicy:
    """Uniform random actions, reseeded per trial."""

    def __init__(self, seed: int = 0):
        self.rng = make_rng(seed)

    def begin_trial(self, seed: int):
        self.rng = make_rng(seed)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=ACTION_DIM)


def run_trial(policy: Callable[[np.ndarray], np.ndarray], env: DepositionDroneEnv, trial: int,
              seed: int, waypoints: Optional[Sequence[Sequence[float]]] = None) -> TrialRecord:
    """Roll out one greedy test episode seeded by ``seed``."""
    if hasattr(policy, "begin_trial"):
        policy.begin_trial(seed)
    options = {"training": False}
    if waypoints is not None:
        options["waypoints"] = waypoints
    obs, info = env.reset(seed=seed, options=options)

    total, steps = 0.0, 0
    status = info["status"]
    while not status.is_finished:
        obs, step_reward, _, _, info = env.step(np.clip(policy(obs), -1.0, 1.0))
        status = info["status"]
        total += step_reward
        steps += 1

    return TrialRecord(
        trial=trial,
        seed=seed,
        status=status.value,
        steps=steps,
        cumulative_reward=float(total),
        positional_error=float(np.linalg.norm(env.episode.waypoints[-1] - env.state.position)),
        waypoints=[w.tolist() for w in env.episode.waypoints],
        trajectory=list(env.trajectory),
    )


def run_trials(policy: Callable[[np.ndarray], np.ndarray], env: DepositionDroneEnv, n: int,
               base_seed: int, record_trajectories: bool = False,
               waypoints: Optional[Sequence[Sequence[float]]] = None,
               trial_indices: Optional[Sequence[int]] = None) -> List[TrialRecord]:
    """
    Run ``n`` independent test episodes.

    Trial ``i`` is seeded with ``base_seed + i``, so every trial is
    reproducible on its own and the execution order does not matter.

    Args:
        policy: Greedy policy mapping observations to raw actions
        env: Environment; switched to test mode here
        n: Number of trials
        base_seed: Seed of trial 0
        record_trajectories: Keep per-step position samples
        waypoints: Fixed waypoint list for every trial (random when None)
        trial_indices: Order in which trial indices are executed (0..n-1 by default)

    Returns:
        Records sorted by trial index
    """
    if n < 1:
        raise ContractViolation("Number of trials must be positive", f"n={n}")
    if env.normalizer is not None and not env.normalizer.frozen:
        raise ContractViolation("Normalizer must be frozen for evaluation")
    indices = list(range(n)) if trial_indices is None else list(trial_indices)
    if sorted(indices) != list(range(n)):
        raise ContractViolation("Trial indices must be a permutation of 0..n-1")

    env.record_trajectory = record_trajectories
    records = [run_trial(policy, env, i, base_seed + i, waypoints) for i in indices]
    records.sort(key=lambda r: r.trial)
    logger.info(f"Completed {n} evaluation trials "
                f"({sum(r.succeeded for r in records)} successful)")
    return records


def compute_metrics(records: Sequence[TrialRecord]) -> MetricsSummary:
    """
    Aggregate trial records.

    Means and population standard deviations run over every trial, failed
    ones included.
    """
    if not records:
        raise InsufficientDataError("No trial records to summarize")
    ordered = sorted(records, key=lambda r: r.trial)
    rewards = np.array([r.cumulative_reward for r in ordered], dtype=np.float64)
    errors = np.array([r.positional_error for r in ordered], dtype=np.float64)
    successes = sum(r.succeeded for r in ordered)
    return MetricsSummary(
        trials=len(ordered),
        average_reward=float(np.mean(rewards)),
        reward_std=float(np.std(rewards)),
        average_positional_error=float(np.mean(errors)),
        precision=float(np.std(errors)),
        success_ratio=100.0 * successes / len(ordered),
    )


def build_eval_env(config: RunConfig, normalizer: Optional[NormalizerStats], stage_id: str = None,
                   waypoint_count: int = None, seed: int = None) -> DepositionDroneEnv:
    """
    Test-mode environment for a stage with the requested number of waypoints.

    The normalizer (if any) is frozen on a copy, never on the caller's object.
    """
    evaluation = config.evaluation
    stage = stage_config(stage_id or evaluation.stage, config)
    stage = replace(stage, waypoint_count=waypoint_count or evaluation.waypoints)
    frozen = normalizer.copy().freeze() if normalizer is not None else None
    return make_env(config, stage, normalizer=frozen, training=False,
                    seed=config.seed if seed is None else seed)


@wrap_export_errors
def write_trials(records: Sequence[TrialRecord], path: str) -> str:
    """Per-trial CSV table with TRIAL_COLUMNS."""
    return write_csv([r.to_row() for r in records], TRIAL_COLUMNS, path)


@wrap_export_errors
def read_trials(path: str) -> List[TrialRecord]:
    """Parse a per-trial CSV back into records (floats are read losslessly)."""
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in TRIAL_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"Missing columns {missing}")
    return [
        TrialRecord(
            trial=int(row.trial),
            seed=int(row.seed),
            status=str(row.status),
            steps=int(row.steps),
            cumulative_reward=float(row.cumulative_reward),
            positional_error=float(row.positional_error),
        )
        for row in frame.itertuples(index=False)
    ]


@wrap_export_errors
def write_errors(records: Sequence[TrialRecord], path: str) -> str:
    """Raw positional-error samples for external distribution fitting."""
    return write_csv([{"trial": r.trial, "positional_error": r.positional_error} for r in records],
                     ERROR_COLUMNS, path)


@wrap_export_errors
def write_summary(summary: MetricsSummary, path: str, metadata: Optional[Dict[str, Any]] = None) -> str:
    document = {"metrics": summary.to_dict()}
    if metadata:
        document["run"] = metadata
    atomic_write_text(path, dump_json(document))
    return path


@wrap_export_errors
def read_summary(path: str) -> MetricsSummary:
    with open(path, "r", encoding="utf-8") as handle:
        return MetricsSummary(**json.load(handle)["metrics"])


@wrap_export_errors
def write_trajectories(records: Sequence[TrialRecord], path: str,
                       metadata: Optional[Dict[str, Any]] = None) -> str:
    """
    Ordered position samples per trial, with each trial's waypoints.

    Sample fields: step, x, y, z (m), mass (kg), waypoint_index.
    """
    document = {
        "run": metadata or {},
        "trials": [
            {
                "trial": r.trial,
                "seed": r.seed,
                "status": r.status,
                "waypoints": r.waypoints,
                "samples": r.trajectory,
            }
            for r in records
        ],
    }
    atomic_write_text(path, dump_json(document))
    return path


def export(records: Sequence[TrialRecord], summary: MetricsSummary, output_dir: str,
           metadata: Optional[Dict[str, Any]] = None, trajectories: bool = False) -> Dict[str, str]:
    """
    Write the evaluation artifacts into ``output_dir``.

    Returns:
        Mapping of artifact name to written path
    """
    ensure_directory(output_dir)
    paths = {
        "trials": write_trials(records, path=os.path.join(output_dir, TRIALS_FILE)),
        "errors": write_errors(records, path=os.path.join(output_dir, ERRORS_FILE)),
        "summary": write_summary(summary, path=os.path.join(output_dir, SUMMARY_FILE), metadata=metadata),
    }
    if trajectories:
        paths["trajectory"] = write_trajectories(
            records, path=os.path.join(output_dir, TRAJECTORY_FILE), metadata=metadata)
    logger.info(f"Evaluation artifacts written to {output_dir}")
    return paths
