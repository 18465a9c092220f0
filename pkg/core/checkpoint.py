import os
import json
import logging
import tempfile
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from core.agents import ActorCriticAgent, make_agent
from core.config import RunConfig, config_from_dict, config_to_dict
from core.drone_env import NormalizerStats
from core.networks import DenseNetwork
from utils.constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION, APP_VERSION
from utils.exceptions import CheckpointError, wrap_checkpoint_errors, wrap_export_errors

# Initialize logger
logger = logging.getLogger(__name__)

HEADER_KEY = "header"


@dataclass
class Checkpoint:
    """Everything needed to resume training or run a frozen evaluation."""
    agent: ActorCriticAgent
    normalizer: Optional[NormalizerStats]
    config: RunConfig
    metadata: Dict[str, Any] = field(default_factory=dict)


def _network_arrays(agent: ActorCriticAgent) -> Dict[str, np.ndarray]:
    arrays = {}
    arrays.update(agent.actor.state_dict("actor."))
    arrays.update(agent.actor_target.state_dict("actor_target."))
    arrays.update(agent.actor_opt.state_dict("actor_opt."))
    for i, (critic, target, opt) in enumerate(zip(agent.critics, agent.critic_targets, agent.critic_opts)):
        arrays.update(critic.state_dict(f"critic{i}."))
        arrays.update(target.state_dict(f"critic{i}_target."))
        arrays.update(opt.state_dict(f"critic{i}_opt."))
    arrays["agent.update_count"] = np.array(agent.update_count, dtype=np.int64)
    arrays["agent.smoothing_std"] = np.array(agent.smoothing.std)
    return arrays


@wrap_export_errors
def save_checkpoint(path: str, agent: ActorCriticAgent, normalizer: Optional[NormalizerStats],
                    config: RunConfig, metadata: Optional[Dict[str, Any]] = None) -> str:
    """
    Write a versioned checkpoint archive (.npz) atomically.

    Args:
        path: Destination file
        agent: Agent whose networks, targets and optimizer moments are stored
        normalizer: Observation statistics (stored frozen-agnostic), or None
        config: Resolved run configuration
        metadata: Extra run facts (episode, stage reached, buffer counts)

    Returns:
        The written path
    """
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "app_version": APP_VERSION,
        "algorithm": agent.algorithm,
        "hidden_sizes": agent.hidden_sizes,
        "has_normalizer": normalizer is not None,
        "config": config_to_dict(config),
        "metadata": metadata or {},
    }
    arrays = _network_arrays(agent)
    if normalizer is not None:
        arrays.update(normalizer.state_dict("normalizer."))
    arrays[HEADER_KEY] = np.array(json.dumps(header, sort_keys=True))

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".npz")
    try:
        with os.fdopen(fd, "wb") as handle:
            np.savez(handle, **arrays)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.info(f"Checkpoint written: {path}")
    return path


def _restore_network(network: DenseNetwork, state: Dict[str, np.ndarray], prefix: str) -> DenseNetwork:
    restored = DenseNetwork.from_state_dict(state, [l.activation for l in network.layers], prefix)
    if restored.architecture != network.architecture:
        raise CheckpointError("Network shape does not match the stored configuration",
                              f"{prefix} {restored.architecture} vs {network.architecture}")
    return restored


def read_header(state: Dict[str, np.ndarray]) -> Dict[str, Any]:
    if HEADER_KEY not in state:
        raise CheckpointError("Checkpoint header missing")
    header = json.loads(str(state[HEADER_KEY]))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("Not a checkpoint of this application", f"format={header.get('format')}")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError("Unsupported checkpoint version",
                              f"found {header.get('version')}, expected {CHECKPOINT_VERSION}")
    return header


@wrap_checkpoint_errors
def load_checkpoint(path: str) -> Checkpoint:
    """
    Load a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: Missing, corrupt or version-mismatched file
    """
    if not os.path.isfile(path):
        raise CheckpointError("Checkpoint not found", path)
    with np.load(path, allow_pickle=False) as archive:
        state = {key: archive[key] for key in archive.files}
    header = read_header(state)
    config = config_from_dict(header["config"])

    agent = make_agent(config, np.random.default_rng(0))
    agent.actor = _restore_network(agent.actor, state, "actor.")
    agent.actor_target = _restore_network(agent.actor_target, state, "actor_target.")
    agent.actor_opt.load_state_dict(state, "actor_opt.")
    for i in range(len(agent.critics)):
        agent.critics[i] = _restore_network(agent.critics[i], state, f"critic{i}.")
        agent.critic_targets[i] = _restore_network(agent.critic_targets[i], state, f"critic{i}_target.")
        agent.critic_opts[i].load_state_dict(state, f"critic{i}_opt.")
    agent.update_count = int(state["agent.update_count"])
    agent.smoothing.std = float(state["agent.smoothing_std"])

    normalizer = NormalizerStats.from_state_dict(state, "normalizer.") if header["has_normalizer"] else None
    logger.info(f"Checkpoint loaded: {path} ({header['algorithm']}, "
                f"stage {header['metadata'].get('stage', 'n/a')})")
    return Checkpoint(agent=agent, normalizer=normalizer, config=config, metadata=header["metadata"])
