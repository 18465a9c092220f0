import logging
from dataclasses import dataclass, field, asdict, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from core.agents import (
    ActorCriticAgent, TrainingSchedule, TrainingLog, EpisodeRecord, train_loop
)
from core.config import RunConfig, STAGE_IDS
from core.drone_env import DepositionDroneEnv, RewardVariant, StageSettings, TerminationStatus
from core.replay_buffer import ReplayBuffer
from utils.constants import PROMOTION_WINDOW, PROMOTION_THRESHOLD, PROMOTION_MIN_EPISODES
from utils.exceptions import ContractViolation

# Initialize logger
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PromotionCriteria:
    """Rolling success gate a stage must pass before the next stage starts."""
    window: int = PROMOTION_WINDOW
    threshold: float = PROMOTION_THRESHOLD
    min_episodes: int = PROMOTION_MIN_EPISODES

    def __post_init__(self):
        if self.window < 1:
            raise ContractViolation("Promotion window must be at least 1", f"window={self.window}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ContractViolation("Promotion threshold must lie in [0, 1]",
                                    f"threshold={self.threshold}")
        if self.min_episodes < 0:
            raise ContractViolation("Minimum episodes must be non-negative",
                                    f"min_episodes={self.min_episodes}")


@dataclass
class StageRecord:
    """One row of the stage log."""
    stage: str
    start_episode: int
    end_episode: int
    episodes: int
    success_ratio: float
    promoted: bool
    buffer_size_at_start: int

    def to_row(self) -> Dict:
        return asdict(self)


@dataclass
class CurriculumResult:
    log: TrainingLog
    stages: List[StageRecord] = field(default_factory=list)

    @property
    def final_stage(self) -> str:
        return self.stages[-1].stage if self.stages else None


def stage_config(stage_id: str, config: Optional[RunConfig] = None) -> StageSettings:
    """
    Environment features of a curriculum stage.

    C1 is a single static waypoint under the distance reward. C2 randomizes
    start and waypoints, adds the waypoint bonus and measurement noise and
    switches to the exponential reward. C3 adds deposition and a randomized
    initial mass. C4 adds wind and the cross-track deviation penalty.

    Args:
        stage_id: One of C1..C4
        config: Run configuration supplying counts and coefficients (defaults if None)

    Returns:
        StageSettings for the stage
    """
    if stage_id not in STAGE_IDS:
        raise ContractViolation(f"Unknown curriculum stage '{stage_id}'", f"expected one of {STAGE_IDS}")
    env = (config or RunConfig()).env
    level = STAGE_IDS.index(stage_id)

    settings = StageSettings(stage_id="C1")
    if level >= 1:
        settings = replace(
            settings,
            stage_id="C2",
            waypoint_count=env.waypoint_count,
            randomize_start=True,
            reward_variant=RewardVariant.EXPONENTIAL,
            waypoint_bonus=env.waypoint_bonus,
            noise_halfwidth=tuple(float(h) for h in env.noise_halfwidth),
        )
    if level >= 2:
        settings = replace(settings, stage_id="C3", deposition_active=True,
                           mass_variation=env.mass_variation)
    if level >= 3:
        settings = replace(settings, stage_id="C4", wind_active=True,
                           deviation_penalty=env.deviation_penalty)
    return settings


def build_stages(config: RunConfig, stage_ids: Sequence[str] = None) -> List[StageSettings]:
    """Stage settings for an ordered list of stage ids (the configured list by default)."""
    ids = list(config.curriculum.stages if stage_ids is None else stage_ids)
    if not ids:
        raise ContractViolation("Curriculum needs at least one stage")
    order = [STAGE_IDS.index(s) if s in STAGE_IDS else -1 for s in ids]
    if min(order) < 0 or any(b <= a for a, b in zip(order[:-1], order[1:])):
        raise ContractViolation("Curriculum stages must be strictly ordered C1..C4", f"stages={ids}")
    return [stage_config(s, config) for s in ids]


def criteria_from_config(config: RunConfig) -> PromotionCriteria:
    c = config.curriculum
    return PromotionCriteria(window=c.window, threshold=c.threshold, min_episodes=c.min_episodes)


def should_promote(history: Sequence[bool], criteria: PromotionCriteria) -> bool:
    """
    Decide whether the current stage is mastered.

    A full window is required, and the stage must have run at least
    ``min_episodes`` episodes; the success ratio over the last ``window``
    outcomes must then reach the threshold.

    Args:
        history: Success flags of this stage's episodes, oldest first
        criteria: Promotion gate
    """
    if len(history) < max(criteria.min_episodes, criteria.window, 1):
        return False
    recent = list(history)[-criteria.window:]
    return sum(bool(h) for h in recent) / len(recent) >= criteria.threshold


def _successes(records: Sequence[EpisodeRecord]) -> List[bool]:
    return [r.status == TerminationStatus.SUCCESS.value for r in records]


def curriculum_train(agent: ActorCriticAgent,
                     env: DepositionDroneEnv,
                     stages: Sequence[StageSettings],
                     criteria: PromotionCriteria,
                     budget: int,
                     buffer: ReplayBuffer,
                     rng: np.random.Generator,
                     schedule: TrainingSchedule,
                     on_episode_end: Optional[Callable[[EpisodeRecord], None]] = None) -> CurriculumResult:
    """
    Train one agent through the stages in order.

    The replay buffer and episode numbering carry over between stages. A
    stage ends on promotion or when the episode budget is spent; passing the
    gate on the last stage ends training.

    Args:
        agent: Agent trained in place
        env: Training environment; its stage is switched here
        stages: Ordered stage settings (a prefix of C1..C4 or any increasing subset)
        criteria: Promotion gate
        budget: Total episode budget across all stages
        buffer: Shared replay buffer
        rng: Exploration and sampling stream
        schedule: Learning budget per episode (its episode count is ignored)
        on_episode_end: Callback for each EpisodeRecord

    Returns:
        CurriculumResult with the training log and one StageRecord per visited stage
    """
    ids = [s.stage_id for s in stages]
    if [STAGE_IDS.index(i) for i in ids] != sorted(STAGE_IDS.index(i) for i in set(ids)):
        raise ContractViolation("Curriculum stages must be strictly ordered", f"stages={ids}")

    result = CurriculumResult(log=TrainingLog())
    for position, settings in enumerate(stages):
        remaining = budget - len(result.log.episodes)
        if remaining <= 0:
            break
        env.stage = settings
        start = len(result.log.episodes)
        buffer_at_start = len(buffer)
        logger.info(f"Stage {settings.stage_id} started at episode {start + 1} "
                    f"(buffer size {buffer_at_start})")

        def gate(log: TrainingLog, first=start) -> bool:
            return should_promote(_successes(log.episodes[first:]), criteria)

        train_loop(agent, env, replace(schedule, episodes=remaining), buffer, rng,
                   log=result.log, stop_condition=gate, on_episode_end=on_episode_end)

        stage_episodes = result.log.episodes[start:]
        promoted = gate(result.log)
        successes = _successes(stage_episodes)
        result.stages.append(StageRecord(
            stage=settings.stage_id,
            start_episode=start + 1,
            end_episode=len(result.log.episodes),
            episodes=len(stage_episodes),
            success_ratio=sum(successes) / len(successes) if successes else 0.0,
            promoted=promoted,
            buffer_size_at_start=buffer_at_start,
        ))
        if not promoted:
            logger.info(f"Episode budget exhausted in stage {settings.stage_id}")
            break
        if position == len(stages) - 1:
            logger.info(f"Final stage {settings.stage_id} passed at episode {len(result.log.episodes)}")
        else:
            logger.info(f"Promoted from {settings.stage_id} to {stages[position + 1].stage_id} "
                        f"at episode {len(result.log.episodes)}")
    return result
