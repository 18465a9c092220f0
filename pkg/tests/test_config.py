import json

import pytest

from core.config import (
    RunConfig, config_from_dict, config_to_dict, apply_overrides, parse_override, load_config, dump_config
)
from utils.exceptions import ConfigurationError


def test_defaults_reproduce_hyperparameter_table(default_config):
    agent = default_config.agent
    assert agent.learning_rate == 1e-3
    assert agent.gradient_threshold == 1.0
    assert agent.gamma == 0.99
    assert agent.batch_size == 256
    assert agent.buffer_length == 1_000_000
    assert agent.tau == 5e-3
    assert agent.policy_update_frequency == 1 and agent.target_update_frequency == 1
    assert agent.mean_attraction == 1.0 and agent.noise_std == 0.1
    assert agent.smoothing_std == 0.05 and agent.smoothing_std_min == 0.05
    assert agent.smoothing_limit == 0.5
    assert default_config.physics.dt == 0.01
    assert default_config.training.num_epochs == 3
    assert default_config.training.max_mini_batches == 100
    assert default_config.network.hidden_sizes == [400, 300]


def test_unknown_keys_are_rejected_with_path():
    with pytest.raises(ConfigurationError) as excinfo:
        config_from_dict({"agent": {"gama": 0.9}})
    assert excinfo.value.key_path == "agent.gama"
    with pytest.raises(ConfigurationError):
        config_from_dict({"colour": "red"})


def test_type_errors_name_the_key():
    with pytest.raises(ConfigurationError) as excinfo:
        config_from_dict({"agent": {"batch_size": "big"}})
    assert excinfo.value.key_path == "agent.batch_size"
    with pytest.raises(ConfigurationError):
        config_from_dict({"curriculum": {"enabled": 1}})


def test_cross_field_validation():
    with pytest.raises(ConfigurationError):
        config_from_dict({"algorithm": "ppo"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"curriculum": {"stages": ["C3", "C1"]}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"curriculum": {"threshold": 1.2}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"env": {"noise_halfwidth": [0.1, 0.1]}})
    with pytest.raises(ConfigurationError) as excinfo:
        config_from_dict({"agent": {"smoothing_decay_rate": 1.0}})
    assert excinfo.value.key_path == "agent.smoothing_decay_rate"


def test_round_trip_is_idempotent(default_config):
    data = config_to_dict(default_config)
    assert config_from_dict(data) == default_config
    echoed = json.loads(dump_config(default_config))
    assert config_from_dict(echoed) == default_config


def test_overrides():
    assert parse_override("agent.gamma=0.98") == ("agent.gamma", 0.98)
    assert parse_override("output_dir=runs/x") == ("output_dir", "runs/x")
    data = apply_overrides({}, ["agent.gamma=0.98", "network.hidden_sizes=[64, 64]", "curriculum.enabled=false"])
    config = config_from_dict(data)
    assert config.agent.gamma == 0.98
    assert config.network.hidden_sizes == [64, 64]
    assert config.curriculum.enabled is False
    with pytest.raises(ConfigurationError):
        apply_overrides({}, ["agent.gama=0.5"])
    with pytest.raises(ConfigurationError):
        apply_overrides({}, ["seed"])


def test_load_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"algorithm": "ddpg", "training": {"episodes": 12}}))
    config = load_config(str(path), ["seed=7"])
    assert config.algorithm == "ddpg"
    assert config.training.episodes == 12
    assert config.seed == 7
    assert config.agent.gamma == RunConfig().agent.gamma


def test_load_config_reports_bad_files(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(str(broken))
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / "missing.json"))


def test_shipped_configs_parse():
    import os
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    default = load_config(os.path.join(root, "configs", "default.json"))
    assert default == RunConfig(output_dir="runs/default")
    desk = load_config(os.path.join(root, "configs", "desk_scale.json"))
    assert desk.network.hidden_sizes == [64, 64]
    assert desk.env.max_steps <= 500 and desk.training.episodes <= 300
