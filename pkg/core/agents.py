import logging
from collections import deque
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, Optional

import numpy as np

from core.networks import (
    DenseNetwork, AdamState, RELU, TANH, IDENTITY,
    adam_step, clip_gradients, soft_update
)
from core.noise import GaussianNoise, OrnsteinUhlenbeckNoise, SmoothingPolicy
from core.replay_buffer import ReplayBuffer, Transition, TransitionBatch
from core.drone_env import DepositionDroneEnv, TerminationStatus
from utils.constants import (
    OBSERVATION_DIM, ACTION_DIM, HIDDEN_SIZES, SAMPLE_TIME, LEARNING_RATE,
    GRADIENT_THRESHOLD, DISCOUNT_FACTOR, TARGET_SMOOTH_FACTOR, POLICY_UPDATE_FREQUENCY,
    TARGET_UPDATE_FREQUENCY, MEAN_ATTRACTION, NOISE_STD, SMOOTHING_STD, SMOOTHING_STD_MIN,
    SMOOTHING_LIMIT, SMOOTHING_DECAY_RATE, MINI_BATCH_SIZE, NUM_EPOCHS, MAX_MINI_BATCH_PER_EPOCH,
    REWARD_AVERAGE_WINDOW
)
from utils.exceptions import ContractViolation

# Initialize logger
logger = logging.getLogger(__name__)

DDPG = "ddpg"
TD3 = "td3"


@dataclass
class AgentHyperparameters:
    learning_rate: float = LEARNING_RATE
    gradient_threshold: float = GRADIENT_THRESHOLD
    gamma: float = DISCOUNT_FACTOR
    tau: float = TARGET_SMOOTH_FACTOR
    policy_update_frequency: int = POLICY_UPDATE_FREQUENCY
    target_update_frequency: int = TARGET_UPDATE_FREQUENCY
    mean_attraction: float = MEAN_ATTRACTION
    noise_std: float = NOISE_STD
    smoothing_std: float = SMOOTHING_STD
    smoothing_std_min: float = SMOOTHING_STD_MIN
    smoothing_limit: float = SMOOTHING_LIMIT
    smoothing_decay_rate: float = SMOOTHING_DECAY_RATE
    sample_time: float = SAMPLE_TIME


def build_actor(obs_dim: int, action_dim: int, hidden_sizes, rng) -> DenseNetwork:
    sizes = [obs_dim, *hidden_sizes, action_dim]
    activations = [RELU] * len(hidden_sizes) + [TANH]
    return DenseNetwork.build(sizes, activations, rng)


def build_critic(obs_dim: int, action_dim: int, hidden_sizes, rng) -> DenseNetwork:
    """Critic on the concatenated (state, action) input."""
    sizes = [obs_dim + action_dim, *hidden_sizes, 1]
    activations = [RELU] * len(hidden_sizes) + [IDENTITY]
    return DenseNetwork.build(sizes, activations, rng)


class ActorCriticAgent:
    """
    Deterministic actor with one (DDPG) or two (TD3) critics and target copies.

    Exploration follows the configured model: Gaussian noise for DDPG and
    Ornstein-Uhlenbeck noise for TD3.
    """

    def __init__(self,
                 algorithm: str = TD3,
                 obs_dim: int = OBSERVATION_DIM,
                 action_dim: int = ACTION_DIM,
                 hidden_sizes=HIDDEN_SIZES,
                 hyperparameters: AgentHyperparameters = None,
                 rng: np.random.Generator = None):
        """
        Initialize the agent.

        Args:
            algorithm: "ddpg" or "td3"
            obs_dim: Observation size
            action_dim: Action size
            hidden_sizes: Hidden layer widths shared by actor and critics
            hyperparameters: Optimization and noise settings
            rng: Generator used for weight initialization
        """
        if algorithm not in (DDPG, TD3):
            raise ContractViolation(f"Unknown algorithm '{algorithm}'")
        self.algorithm = algorithm
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.hidden_sizes = list(hidden_sizes)
        self.hp = hyperparameters or AgentHyperparameters()
        rng = rng if rng is not None else np.random.default_rng(0)

        self.actor = build_actor(obs_dim, action_dim, self.hidden_sizes, rng)
        n_critics = 2 if algorithm == TD3 else 1
        self.critics = [build_critic(obs_dim, action_dim, self.hidden_sizes, rng) for _ in range(n_critics)]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = AdamState.for_network(self.actor, self.hp.learning_rate)
        self.critic_opts = [AdamState.for_network(c, self.hp.learning_rate) for c in self.critics]

        if algorithm == TD3:
            self.exploration = OrnsteinUhlenbeckNoise(self.hp.mean_attraction, self.hp.noise_std,
                                                      self.hp.sample_time, action_dim)
        else:
            self.exploration = GaussianNoise(self.hp.noise_std, action_dim)
        self.smoothing = SmoothingPolicy(self.hp.smoothing_std, self.hp.smoothing_std_min,
                                         self.hp.smoothing_limit, self.hp.smoothing_decay_rate)
        self.update_count = 0

        logger.info(f"{algorithm.upper()} agent initialized (hidden={self.hidden_sizes}, "
                    f"critics={n_critics})")

    def reset_noise(self):
        self.exploration.reset()

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Greedy action for a normalized observation."""
        return np.clip(self.actor.predict(obs), -1.0, 1.0)

    __call__ = act

    def critic_input(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.concatenate([states, actions], axis=-1)


def select_action(agent: ActorCriticAgent, obs: np.ndarray, explore: bool,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Actor output, optionally perturbed by the agent's exploration noise.

    The result is always clamped to [-1, 1]^3.
    """
    action = agent.actor.predict(obs)
    if explore:
        action = action + agent.exploration.sample(rng)
    return np.clip(action, -1.0, 1.0)


def td3_target_from_values(rewards: np.ndarray, dones: np.ndarray, q1: np.ndarray,
                           q2: np.ndarray, gamma: float) -> np.ndarray:
    """Clipped double-Q target r + gamma*(1-done)*min(q1, q2)."""
    return rewards + gamma * (1.0 - dones) * np.minimum(q1, q2)


def smoothed_target_actions(agent: ActorCriticAgent, next_states: np.ndarray,
                            smoothing: SmoothingPolicy, rng: np.random.Generator) -> np.ndarray:
    actions = agent.actor_target.predict(next_states)
    noise = smoothing.sample(actions.shape, rng)
    return np.clip(actions + noise, -1.0, 1.0)


def td3_target(batch: TransitionBatch, agent: ActorCriticAgent, smoothing: SmoothingPolicy,
               rng: np.random.Generator) -> np.ndarray:
    """Bootstrapped targets from the smoothed target policy and both target critics."""
    if len(batch) == 0:
        raise ContractViolation("Empty batch")
    actions = smoothed_target_actions(agent, batch.next_states, smoothing, rng)
    inputs = agent.critic_input(batch.next_states, actions)
    q1 = agent.critic_targets[0].predict(inputs)[:, 0]
    q2 = agent.critic_targets[1].predict(inputs)[:, 0]
    return td3_target_from_values(batch.rewards, batch.dones, q1, q2, agent.hp.gamma)


def ddpg_target(batch: TransitionBatch, agent: ActorCriticAgent) -> np.ndarray:
    actions = agent.actor_target.predict(batch.next_states)
    q = agent.critic_targets[0].predict(agent.critic_input(batch.next_states, actions))[:, 0]
    return batch.rewards + agent.hp.gamma * (1.0 - batch.dones) * q


def _critic_step(agent: ActorCriticAgent, index: int, batch: TransitionBatch,
                 targets: np.ndarray) -> float:
    critic = agent.critics[index]
    q, cache = critic.forward(agent.critic_input(batch.states, batch.actions))
    diff = q[:, 0] - targets
    loss = float(np.mean(diff * diff))
    grads = critic.backward(cache, (2.0 * diff / len(batch)).reshape(-1, 1))
    adam_step(critic, clip_gradients(grads, agent.hp.gradient_threshold), agent.critic_opts[index])
    return loss


def _actor_step(agent: ActorCriticAgent, batch: TransitionBatch) -> float:
    """Ascend the first critic's value of the actor's actions."""
    actions, actor_cache = agent.actor.forward(batch.states)
    critic = agent.critics[0]
    q, critic_cache = critic.forward(agent.critic_input(batch.states, actions))
    loss = -float(np.mean(q))
    critic_grads = critic.backward(critic_cache, np.full_like(q, -1.0 / len(batch)))
    action_grad = critic_grads.inputs[:, agent.obs_dim:]
    actor_grads = agent.actor.backward(actor_cache, action_grad)
    adam_step(agent.actor, clip_gradients(actor_grads, agent.hp.gradient_threshold), agent.actor_opt)
    return loss


def _update_targets(agent: ActorCriticAgent):
    soft_update(agent.actor_target, agent.actor, agent.hp.tau)
    for target, online in zip(agent.critic_targets, agent.critics):
        soft_update(target, online, agent.hp.tau)


def ddpg_update(agent: ActorCriticAgent, batch: TransitionBatch,
                update_index: int = None) -> Dict[str, float]:
    """
    One DDPG update: critic regression, actor ascent, periodic target tracking.

    Returns:
        Dictionary with ``critic_loss`` and ``actor_loss``
    """
    if len(batch) == 0:
        raise ContractViolation("Empty batch")
    agent.update_count += 1
    update_index = agent.update_count if update_index is None else update_index

    targets = ddpg_target(batch, agent)
    critic_loss = _critic_step(agent, 0, batch, targets)
    actor_loss = _actor_step(agent, batch)
    if update_index % agent.hp.target_update_frequency == 0:
        _update_targets(agent)
    return {"critic_loss": critic_loss, "actor_loss": actor_loss}


def td3_update(agent: ActorCriticAgent, batch: TransitionBatch, update_index: int = None,
               rng: np.random.Generator = None) -> Dict[str, float]:
    """
    One TD3 update.

    Both critics regress to the shared clipped double-Q target; the actor and
    all targets move only when ``update_index`` is a multiple of the policy
    update frequency.

    Returns:
        Dictionary with ``critic1_loss``, ``critic2_loss`` and ``actor_loss``
        (None when the actor was not updated)
    """
    if len(batch) == 0:
        raise ContractViolation("Empty batch")
    agent.update_count += 1
    update_index = agent.update_count if update_index is None else update_index
    rng = rng if rng is not None else np.random.default_rng(update_index)

    targets = td3_target(batch, agent, agent.smoothing, rng)
    losses = {
        "critic1_loss": _critic_step(agent, 0, batch, targets),
        "critic2_loss": _critic_step(agent, 1, batch, targets),
        "actor_loss": None,
    }
    if update_index % agent.hp.policy_update_frequency == 0:
        losses["actor_loss"] = _actor_step(agent, batch)
        _update_targets(agent)
    agent.smoothing.decay()
    return losses


def update(agent: ActorCriticAgent, batch: TransitionBatch, rng: np.random.Generator) -> Dict[str, float]:
    if agent.algorithm == TD3:
        return td3_update(agent, batch, rng=rng)
    return ddpg_update(agent, batch)


@dataclass
class TrainingSchedule:
    episodes: int
    batch_size: int = MINI_BATCH_SIZE
    num_epochs: int = NUM_EPOCHS
    max_mini_batches: int = MAX_MINI_BATCH_PER_EPOCH
    warmup: int = MINI_BATCH_SIZE
    learning_enabled: bool = True
    reward_average_window: int = REWARD_AVERAGE_WINDOW
    log_every: int = 10


@dataclass
class EpisodeRecord:
    episode: int
    stage: str
    steps: int
    cumulative_reward: float
    average_reward: float
    status: str
    positional_error: float
    buffer_size: int
    optimizer_steps: int

    def to_row(self) -> Dict:
        return asdict(self)


@dataclass
class TrainingLog:
    episodes: List[EpisodeRecord] = field(default_factory=list)
    optimizer_steps: int = 0

    def rewards(self) -> List[float]:
        return [e.cumulative_reward for e in self.episodes]


def run_episode(agent, env: DepositionDroneEnv, rng: np.random.Generator,
                explore: bool = True, buffer: Optional[ReplayBuffer] = None):
    """
    Roll out one episode from a fresh reset.

    Args:
        agent: ActorCriticAgent, or any callable policy when ``explore`` is False
        env: Environment (reset here)
        rng: Exploration stream
        explore: Add exploration noise
        buffer: Optional replay buffer receiving every transition

    Returns:
        (steps, cumulative reward, final status, final positional error)
    """
    obs, _ = env.reset()
    if explore:
        agent.reset_noise()
    total, steps = 0.0, 0
    status = TerminationStatus.RUNNING
    while not status.is_finished:
        if explore:
            action = select_action(agent, obs, True, rng)
        else:
            action = np.clip(agent(obs), -1.0, 1.0)
        next_obs, step_reward, terminated, _, info = env.step(action)
        status = info["status"]
        if buffer is not None:
            buffer.push(Transition(obs, action, step_reward, next_obs, terminated))
        total += step_reward
        steps += 1
        obs = next_obs
    return steps, total, status, env.positional_error


def learn(agent: ActorCriticAgent, buffer: ReplayBuffer, schedule: TrainingSchedule,
          rng: np.random.Generator) -> int:
    """
    Episode-boundary learning: up to ``num_epochs`` x ``max_mini_batches`` updates.

    Returns:
        Number of optimizer steps performed (0 below the warmup threshold)
    """
    if not schedule.learning_enabled or len(buffer) < max(schedule.warmup, schedule.batch_size):
        return 0
    batches = min(schedule.max_mini_batches, len(buffer) // schedule.batch_size)
    steps = 0
    for _ in range(schedule.num_epochs):
        for _ in range(batches):
            update(agent, buffer.sample(schedule.batch_size, rng), rng)
            steps += 1
    return steps


def train_loop(agent: ActorCriticAgent,
               env: DepositionDroneEnv,
               schedule: TrainingSchedule,
               buffer: ReplayBuffer,
               rng: np.random.Generator,
               log: Optional[TrainingLog] = None,
               stop_condition: Optional[Callable[[TrainingLog], bool]] = None,
               on_episode_end: Optional[Callable[[EpisodeRecord], None]] = None) -> TrainingLog:
    """
    Train for up to ``schedule.episodes`` episodes.

    Args:
        agent: Agent to train in place
        env: Training environment (training mode)
        schedule: Episode budget and learning budget per episode
        buffer: Replay buffer (kept across calls)
        rng: Stream for exploration noise and mini-batch sampling
        log: Existing log to append to (episode numbering continues)
        stop_condition: Checked after every episode; True ends the loop early
        on_episode_end: Callback receiving each EpisodeRecord

    Returns:
        The training log
    """
    log = log if log is not None else TrainingLog()
    recent = deque(maxlen=max(1, schedule.reward_average_window))
    for record in log.episodes[-recent.maxlen:]:
        recent.append(record.cumulative_reward)

    for _ in range(schedule.episodes):
        steps, total, status, error = run_episode(agent, env, rng, explore=True, buffer=buffer)
        optimizer_steps = learn(agent, buffer, schedule, rng)
        log.optimizer_steps += optimizer_steps
        recent.append(total)

        record = EpisodeRecord(
            episode=len(log.episodes) + 1,
            stage=env.stage.stage_id,
            steps=steps,
            cumulative_reward=total,
            average_reward=float(np.mean(recent)),
            status=status.value,
            positional_error=error,
            buffer_size=len(buffer),
            optimizer_steps=optimizer_steps,
        )
        log.episodes.append(record)
        if schedule.log_every and record.episode % schedule.log_every == 0:
            logger.info(f"Episode {record.episode} [{record.stage}]: reward={total:.2f} "
                        f"avg={record.average_reward:.2f} steps={steps} status={status.value}")
        if on_episode_end is not None:
            on_episode_end(record)
        if stop_condition is not None and stop_condition(log):
            break
    return log


def make_agent(config, rng: np.random.Generator) -> ActorCriticAgent:
    """Build an agent from a RunConfig."""
    a = config.agent
    hyperparameters = AgentHyperparameters(
        learning_rate=a.learning_rate,
        gradient_threshold=a.gradient_threshold,
        gamma=a.gamma,
        tau=a.tau,
        policy_update_frequency=a.policy_update_frequency,
        target_update_frequency=a.target_update_frequency,
        mean_attraction=a.mean_attraction,
        noise_std=a.noise_std,
        smoothing_std=a.smoothing_std,
        smoothing_std_min=a.smoothing_std_min,
        smoothing_limit=a.smoothing_limit,
        smoothing_decay_rate=a.smoothing_decay_rate,
        sample_time=config.physics.dt,
    )
    return ActorCriticAgent(config.algorithm, OBSERVATION_DIM, ACTION_DIM,
                            config.network.hidden_sizes, hyperparameters, rng)


def make_schedule(config, episodes: int = None) -> TrainingSchedule:
    """Build a TrainingSchedule from a RunConfig."""
    t = config.training
    return TrainingSchedule(
        episodes=t.episodes if episodes is None else episodes,
        batch_size=config.agent.batch_size,
        num_epochs=t.num_epochs,
        max_mini_batches=t.max_mini_batches,
        warmup=t.warmup,
        learning_enabled=t.learning_enabled,
        reward_average_window=t.reward_average_window,
        log_every=t.log_every,
    )
