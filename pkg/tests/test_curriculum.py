from dataclasses import fields, replace

import numpy as np
import pytest

from core.agents import make_agent, make_schedule, train_loop
from core.config import config_from_dict
from core.curriculum import (
    PromotionCriteria, build_stages, criteria_from_config, curriculum_train, should_promote, stage_config
)
from core.drone_env import NormalizerStats, RewardVariant, make_env
from core.replay_buffer import ReplayBuffer
from utils.exceptions import ContractViolation


def changed_fields(a, b):
    return {f.name for f in fields(a) if getattr(a, f.name) != getattr(b, f.name)} - {"stage_id"}


def test_c1_is_plain_navigation(default_config):
    c1 = stage_config("C1", default_config)
    assert c1.waypoint_count == 1
    assert not c1.randomize_start
    assert c1.reward_variant is RewardVariant.DISTANCE
    assert not c1.deposition_active and not c1.wind_active
    assert all(h == 0.0 for h in c1.noise_halfwidth)


def test_stage_nesting(default_config):
    c1, c2, c3, c4 = (stage_config(s, default_config) for s in ("C1", "C2", "C3", "C4"))
    assert changed_fields(c1, c2) == {"waypoint_count", "randomize_start", "reward_variant",
                                      "waypoint_bonus", "noise_halfwidth"}
    assert changed_fields(c2, c3) == {"deposition_active", "mass_variation"}
    assert changed_fields(c3, c4) == {"wind_active", "deviation_penalty"}
    assert replace(c4, wind_active=False, deviation_penalty=0.0, stage_id="C3") == c3


def test_c3_activates_deposition_with_flow_parameters(default_config):
    env = make_env(default_config, stage_config("C3", default_config), training=False)
    env.reset(seed=0)
    assert env.deposition.active
    assert env.deposition.density == 1700
    assert env.deposition.nozzle_diameter == 0.008
    assert env.deposition.force == pytest.approx(2.135e-2, abs=1e-4)


def test_unknown_stage_is_rejected(default_config):
    with pytest.raises(ContractViolation):
        stage_config("C5", default_config)
    with pytest.raises(ContractViolation):
        build_stages(default_config, ["C2", "C1"])


def test_should_promote():
    criteria = PromotionCriteria(window=50, threshold=0.8, min_episodes=100)
    history = [True] * 90 + [False] * 10
    assert should_promote(history, criteria)
    assert not should_promote([True] * 99, criteria)
    strict = PromotionCriteria(window=50, threshold=1.0, min_episodes=100)
    assert not should_promote([True] * 99 + [False], strict)
    assert should_promote([True] * 100, strict)
    assert not should_promote([True] * 60 + [False] * 40, criteria)


def test_promotion_criteria_validation():
    with pytest.raises(ContractViolation):
        PromotionCriteria(window=0)
    with pytest.raises(ContractViolation):
        PromotionCriteria(threshold=1.5)


def _setup(config, seed=0):
    agent = make_agent(config, np.random.default_rng(seed))
    env = make_env(config, stage_config("C1", config), normalizer=NormalizerStats(), training=True, seed=seed)
    return agent, env, ReplayBuffer(10_000)


def test_single_stage_reduces_to_train_loop(small_config):
    criteria = PromotionCriteria(window=1, threshold=1.0, min_episodes=1000)
    schedule = make_schedule(small_config)

    agent, env, buffer = _setup(small_config)
    result = curriculum_train(agent, env, [stage_config("C1", small_config)], criteria, 6,
                              buffer, np.random.default_rng(0), schedule)

    agent2, env2, buffer2 = _setup(small_config)
    plain = train_loop(agent2, env2, schedule, buffer2, np.random.default_rng(0))

    assert [e.to_row() for e in result.log.episodes] == [e.to_row() for e in plain.episodes]
    assert len(result.stages) == 1 and not result.stages[0].promoted


def test_forced_promotion_reaches_final_stage(small_config):
    criteria = PromotionCriteria(window=1, threshold=0.0, min_episodes=1)
    agent, env, buffer = _setup(small_config)
    stages = build_stages(small_config, ["C1", "C2", "C3", "C4"])
    result = curriculum_train(agent, env, stages, criteria, 20, buffer, np.random.default_rng(0),
                              make_schedule(small_config))

    assert [s.stage for s in result.stages] == ["C1", "C2", "C3", "C4"]
    assert len(result.log.episodes) == 4
    assert [e.stage for e in result.log.episodes] == ["C1", "C2", "C3", "C4"]
    assert result.final_stage == "C4"
    # replay buffer carries over across promotions
    starts = [s.buffer_size_at_start for s in result.stages]
    assert starts == sorted(starts) and starts[-1] > 0
    assert [s.start_episode for s in result.stages] == [1, 2, 3, 4]


def test_budget_exhaustion_stops_in_current_stage(small_config):
    criteria = PromotionCriteria(window=2, threshold=1.0, min_episodes=2)
    agent, env, buffer = _setup(small_config)
    result = curriculum_train(agent, env, build_stages(small_config, ["C1", "C2"]), criteria, 3,
                              buffer, np.random.default_rng(0), make_schedule(small_config))
    assert len(result.log.episodes) == 3
    stage_ids = [e.stage for e in result.log.episodes]
    assert stage_ids == sorted(stage_ids)


def test_criteria_from_config():
    config = config_from_dict({"curriculum": {"window": 10, "threshold": 0.5, "min_episodes": 20}})
    assert criteria_from_config(config) == PromotionCriteria(10, 0.5, 20)
