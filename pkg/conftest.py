import os
import sys

import numpy as np
import pytest

# Make the flat core/utils packages importable from tests
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.config import RunConfig, config_from_dict  # noqa: E402
from core.curriculum import stage_config  # noqa: E402
from core.drone_env import make_env  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def default_config():
    return RunConfig()


@pytest.fixture
def small_config(tmp_path):
    """Tiny networks and short episodes for fast end-to-end runs."""
    return config_from_dict({
        "seed": 3,
        "output_dir": str(tmp_path / "run"),
        "env": {"max_steps": 40},
        "network": {"hidden_sizes": [16, 16]},
        "agent": {"batch_size": 16},
        "training": {"episodes": 6, "warmup": 16, "num_epochs": 1, "max_mini_batches": 2,
                     "checkpoint_every": 3, "log_every": 0},
        "curriculum": {"enabled": False},
        "evaluation": {"trials": 4},
    })


@pytest.fixture
def c1_env(default_config):
    """Raw-observation C1 environment in test mode."""
    return make_env(default_config, stage_config("C1", default_config), normalizer=None,
                    training=False, seed=0)
