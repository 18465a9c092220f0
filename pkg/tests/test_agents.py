import numpy as np
import pytest

from core.agents import (
    ActorCriticAgent, AgentHyperparameters, TrainingSchedule,
    select_action, td3_target_from_values, td3_target, ddpg_target, ddpg_update, td3_update,
    run_episode, learn, train_loop, make_agent, make_schedule
)
from core.config import config_from_dict
from core.curriculum import stage_config
from core.drone_env import NormalizerStats, TerminationStatus, make_env
from core.noise import GaussianNoise, OrnsteinUhlenbeckNoise, SmoothingPolicy
from core.replay_buffer import ReplayBuffer, Transition, TransitionBatch
from utils.exceptions import ContractViolation


def small_agent(algorithm="td3", seed=0, **hp):
    return ActorCriticAgent(algorithm, 13, 3, [16, 16], AgentHyperparameters(**hp),
                            np.random.default_rng(seed))


def single_transition_batch(size=8, reward=1.0, done=True, seed=0):
    rng = np.random.default_rng(seed)
    state = rng.normal(size=13)
    action = rng.uniform(-1, 1, size=3)
    transitions = [Transition(state, action, reward, rng.normal(size=13), done)] * size
    return TransitionBatch.from_transitions(transitions)


def test_td3_target_arithmetic():
    target = td3_target_from_values(np.array([1.0, 1.0]), np.array([0.0, 1.0]),
                                    np.array([1.5, 1.5]), np.array([2.0, 2.0]), 0.99)
    np.testing.assert_allclose(target, [2.485, 1.0])


def test_td3_target_never_exceeds_single_critic_targets():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        rewards = rng.normal(size=8)
        dones = (rng.random(8) < 0.2).astype(float)
        q1, q2 = rng.normal(scale=5.0, size=8), rng.normal(scale=5.0, size=8)
        twin = td3_target_from_values(rewards, dones, q1, q2, 0.99)
        single1 = rewards + 0.99 * (1.0 - dones) * q1
        single2 = rewards + 0.99 * (1.0 - dones) * q2
        assert np.all(twin <= single1)
        assert np.all(twin <= single2)


def test_terminal_transitions_do_not_bootstrap():
    agent = small_agent()
    batch = single_transition_batch(reward=2.5, done=True)
    np.testing.assert_array_equal(td3_target(batch, agent, agent.smoothing, np.random.default_rng(1)),
                                  np.full(8, 2.5))
    ddpg = small_agent("ddpg")
    np.testing.assert_array_equal(ddpg_target(batch, ddpg), np.full(8, 2.5))


def test_identical_critics_give_single_critic_target():
    agent = small_agent()
    agent.critic_targets[1] = agent.critic_targets[0].copy()
    batch = single_transition_batch(done=False)
    smoothing = SmoothingPolicy(std=0.0, std_min=0.0)
    twin = td3_target(batch, agent, smoothing, np.random.default_rng(0))
    actions = agent.actor_target.predict(batch.next_states)
    q = agent.critic_targets[0].predict(agent.critic_input(batch.next_states, actions))[:, 0]
    np.testing.assert_allclose(twin, batch.rewards + 0.99 * q)


def test_agent_structure():
    td3 = small_agent("td3")
    ddpg = small_agent("ddpg")
    assert len(td3.critics) == 2 and len(ddpg.critics) == 1
    assert isinstance(td3.exploration, OrnsteinUhlenbeckNoise)
    assert isinstance(ddpg.exploration, GaussianNoise)
    assert td3.actor.architecture[-1] == (16, 3, "tanh")
    assert td3.critics[0].architecture[0][0] == 16
    with pytest.raises(ContractViolation):
        small_agent("sac")


def test_select_action_is_clamped():
    agent = small_agent(noise_std=5.0)
    rng = np.random.default_rng(0)
    obs = np.random.default_rng(1).normal(size=13)
    greedy = select_action(agent, obs, explore=False)
    np.testing.assert_array_equal(greedy, np.clip(agent.actor.predict(obs), -1, 1))
    explored = [select_action(agent, obs, explore=True, rng=rng) for _ in range(50)]
    assert all(np.all(np.abs(a) <= 1.0) for a in explored)
    assert any(not np.array_equal(a, greedy) for a in explored)


def test_delayed_policy_updates():
    agent = small_agent(policy_update_frequency=2)
    batch = single_transition_batch(done=False)
    actor_before = [p.copy() for p in agent.actor.parameters()]
    target_before = [p.copy() for p in agent.critic_targets[0].parameters()]

    first = td3_update(agent, batch, rng=np.random.default_rng(0))
    assert first["actor_loss"] is None
    for old, new in zip(actor_before, agent.actor.parameters()):
        np.testing.assert_array_equal(old, new)
    for old, new in zip(target_before, agent.critic_targets[0].parameters()):
        np.testing.assert_array_equal(old, new)

    second = td3_update(agent, batch, rng=np.random.default_rng(1))
    assert second["actor_loss"] is not None
    assert any(not np.array_equal(old, new) for old, new in zip(actor_before, agent.actor.parameters()))
    assert agent.update_count == 2


def test_ddpg_target_update_frequency():
    agent = small_agent("ddpg", target_update_frequency=3)
    batch = single_transition_batch(done=False)
    before = [p.copy() for p in agent.actor_target.parameters()]
    ddpg_update(agent, batch)
    ddpg_update(agent, batch)
    for old, new in zip(before, agent.actor_target.parameters()):
        np.testing.assert_array_equal(old, new)
    ddpg_update(agent, batch)
    assert any(not np.array_equal(old, new) for old, new in zip(before, agent.actor_target.parameters()))


@pytest.mark.parametrize("algorithm", ["ddpg", "td3"])
def test_critic_overfits_a_terminal_transition(algorithm):
    agent = small_agent(algorithm)
    batch = single_transition_batch(reward=1.0, done=True)
    rng = np.random.default_rng(0)
    for i in range(3000):
        losses = ddpg_update(agent, batch) if algorithm == "ddpg" else td3_update(agent, batch, rng=rng)
    q = agent.critics[0].predict(agent.critic_input(batch.states[:1], batch.actions[:1]))[0, 0]
    assert q == pytest.approx(1.0, abs=1e-2)
    critic_loss = losses["critic_loss"] if algorithm == "ddpg" else losses["critic1_loss"]
    assert critic_loss < 1e-3


def test_update_rejects_empty_batch():
    agent = small_agent()
    empty = TransitionBatch(np.zeros((0, 13)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 13)), np.zeros(0))
    with pytest.raises(ContractViolation):
        td3_update(agent, empty)


def test_smoothing_std_decays_per_update_from_config():
    config = config_from_dict({"network": {"hidden_sizes": [16, 16]},
                               "agent": {"smoothing_std": 0.2, "smoothing_std_min": 0.05,
                                         "smoothing_decay_rate": 0.5}})
    agent = make_agent(config, np.random.default_rng(0))
    assert agent.smoothing.std == pytest.approx(0.2)
    batch = single_transition_batch(done=False)
    td3_update(agent, batch, rng=np.random.default_rng(0))
    assert agent.smoothing.std == pytest.approx(0.1)
    for i in range(5):
        td3_update(agent, batch, rng=np.random.default_rng(i))
    assert agent.smoothing.std == pytest.approx(0.05)


def _training_setup(config, seed=0):
    agent = make_agent(config, np.random.default_rng(seed))
    env = make_env(config, stage_config("C1", config), normalizer=NormalizerStats(), training=True, seed=seed)
    return agent, env, ReplayBuffer(10_000)


def test_run_episode_stores_truncation_as_not_done(small_config):
    agent, env, buffer = _training_setup(small_config)
    steps, total, status, error = run_episode(agent, env, np.random.default_rng(0), True, buffer)
    assert len(buffer) == steps
    last = buffer.get(steps - 1)
    assert last.done == status.is_terminal
    assert not any(buffer.get(i).done for i in range(steps - 1))
    assert error >= 0


def test_learn_respects_warmup_and_budget(small_config):
    agent, env, buffer = _training_setup(small_config)
    schedule = TrainingSchedule(episodes=1, batch_size=16, num_epochs=2, max_mini_batches=3, warmup=50)
    rng = np.random.default_rng(0)
    for i in range(40):
        buffer.push(Transition(np.zeros(13), np.zeros(3), 0.0, np.zeros(13), False))
    assert learn(agent, buffer, schedule, rng) == 0
    for i in range(20):
        buffer.push(Transition(np.zeros(13), np.zeros(3), 0.0, np.zeros(13), False))
    assert learn(agent, buffer, schedule, rng) == 6
    disabled = TrainingSchedule(episodes=1, batch_size=16, warmup=16, learning_enabled=False)
    assert learn(agent, buffer, disabled, rng) == 0


def test_train_loop_bookkeeping(small_config):
    agent, env, buffer = _training_setup(small_config)
    schedule = make_schedule(small_config)
    seen = []
    log = train_loop(agent, env, schedule, buffer, np.random.default_rng(0), on_episode_end=seen.append)
    assert [e.episode for e in log.episodes] == list(range(1, 7))
    assert seen == log.episodes
    sizes = [e.buffer_size for e in log.episodes]
    assert sizes == sorted(sizes)
    assert sizes[-1] == sum(e.steps for e in log.episodes)
    assert log.optimizer_steps == sum(e.optimizer_steps for e in log.episodes) > 0
    assert log.episodes[1].average_reward == pytest.approx(np.mean(log.rewards()[:2]))
    assert all(e.status in {s.value for s in TerminationStatus} for e in log.episodes)


def test_train_loop_stop_condition_and_continuation(small_config):
    agent, env, buffer = _training_setup(small_config)
    schedule = make_schedule(small_config)
    log = train_loop(agent, env, schedule, buffer, np.random.default_rng(0),
                     stop_condition=lambda lg: len(lg.episodes) >= 2)
    assert len(log.episodes) == 2
    train_loop(agent, env, schedule, buffer, np.random.default_rng(1), log=log,
               stop_condition=lambda lg: len(lg.episodes) >= 3)
    assert [e.episode for e in log.episodes] == [1, 2, 3]


def test_train_loop_is_deterministic(small_config):
    logs = []
    for _ in range(2):
        agent, env, buffer = _training_setup(small_config, seed=4)
        logs.append(train_loop(agent, env, make_schedule(small_config), buffer, np.random.default_rng(4)))
    assert [e.to_row() for e in logs[0].episodes] == [e.to_row() for e in logs[1].episodes]
