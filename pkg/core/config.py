import json
import logging
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, get_type_hints

from utils import constants as C
from utils.exceptions import ConfigurationError
from utils.helpers import dump_json

# Initialize logger
logger = logging.getLogger(__name__)

ALGORITHMS = ("ddpg", "td3")
STAGE_IDS = ("C1", "C2", "C3", "C4")


def _default_noise_halfwidth() -> List[float]:
    return [scale * C.NOISE_FRACTION for scale in C.OBSERVATION_SCALES]


@dataclass
class PhysicsConfig:
    gravity: float = C.GRAVITY
    dt: float = C.SAMPLE_TIME
    attitude_time_constant: float = C.ATTITUDE_TIME_CONSTANT
    mass: float = C.DEFAULT_MASS
    mass_floor_fraction: float = C.MASS_FLOOR_FRACTION


@dataclass
class DepositionConfig:
    density: float = C.MATERIAL_DENSITY
    nozzle_diameter: float = C.NOZZLE_DIAMETER
    exit_velocity: float = C.EXIT_VELOCITY


@dataclass
class WindConfig:
    mean_force: List[float] = field(default_factory=lambda: [0.1, 0.05, 0.0])
    gust_amplitude: List[float] = field(default_factory=lambda: [0.2, 0.2, 0.1])


@dataclass
class EnvConfig:
    waypoint_advance_radius: float = C.WAYPOINT_ADVANCE_RADIUS
    terminal_velocity: float = C.TERMINAL_VELOCITY
    crash_height: float = C.CRASH_HEIGHT
    out_of_bounds_distance: float = C.OUT_OF_BOUNDS_DISTANCE
    max_steps: int = C.MAX_EPISODE_STEPS
    reward_weight: float = C.REWARD_WEIGHT
    noise_halfwidth: List[float] = field(default_factory=_default_noise_halfwidth)
    workspace_low: List[float] = field(default_factory=lambda: list(C.WORKSPACE_LOW))
    workspace_high: List[float] = field(default_factory=lambda: list(C.WORKSPACE_HIGH))
    fixed_start: List[float] = field(default_factory=lambda: list(C.FIXED_START))
    waypoint_count: int = C.DEMO_WAYPOINTS
    waypoint_bonus: float = C.WAYPOINT_BONUS
    deviation_penalty: float = C.DEVIATION_PENALTY
    mass_variation: float = 0.2
    observe_acceleration: bool = True


@dataclass
class NetworkConfig:
    hidden_sizes: List[int] = field(default_factory=lambda: list(C.HIDDEN_SIZES))


@dataclass
class AgentConfig:
    learning_rate: float = C.LEARNING_RATE
    gradient_threshold: float = C.GRADIENT_THRESHOLD
    gamma: float = C.DISCOUNT_FACTOR
    batch_size: int = C.MINI_BATCH_SIZE
    buffer_length: int = C.BUFFER_LENGTH
    tau: float = C.TARGET_SMOOTH_FACTOR
    policy_update_frequency: int = C.POLICY_UPDATE_FREQUENCY
    target_update_frequency: int = C.TARGET_UPDATE_FREQUENCY
    mean_attraction: float = C.MEAN_ATTRACTION
    noise_std: float = C.NOISE_STD
    smoothing_std: float = C.SMOOTHING_STD
    smoothing_std_min: float = C.SMOOTHING_STD_MIN
    smoothing_limit: float = C.SMOOTHING_LIMIT
    smoothing_decay_rate: float = C.SMOOTHING_DECAY_RATE


@dataclass
class TrainingConfig:
    episodes: int = 2000
    stage: str = "C1"
    num_epochs: int = C.NUM_EPOCHS
    max_mini_batches: int = C.MAX_MINI_BATCH_PER_EPOCH
    warmup: int = C.MINI_BATCH_SIZE
    learning_enabled: bool = True
    checkpoint_every: int = C.CHECKPOINT_EVERY
    log_every: int = 10
    reward_average_window: int = C.REWARD_AVERAGE_WINDOW


@dataclass
class CurriculumConfig:
    enabled: bool = True
    stages: List[str] = field(default_factory=lambda: list(STAGE_IDS))
    window: int = C.PROMOTION_WINDOW
    threshold: float = C.PROMOTION_THRESHOLD
    min_episodes: int = C.PROMOTION_MIN_EPISODES


@dataclass
class EvaluationConfig:
    trials: int = C.EVAL_TRIALS
    stage: str = "C1"
    waypoints: int = 1
    record_trajectories: bool = False
    report: bool = False


@dataclass
class RunConfig:
    """Fully resolved configuration of a training or evaluation run."""
    algorithm: str = "td3"
    seed: int = 0
    output_dir: str = "runs/default"
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    deposition: DepositionConfig = field(default_factory=DepositionConfig)
    wind: WindConfig = field(default_factory=WindConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)


def _coerce(value: Any, annotation: Any, key_path: str) -> Any:
    """Check and convert one leaf value against its annotation."""
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigurationError("Expected a boolean", key_path, repr(value))
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigurationError("Expected an integer", key_path, repr(value))
        return int(value)
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError("Expected a number", key_path, repr(value))
        return float(value)
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigurationError("Expected a string", key_path, repr(value))
        return value
    origin = getattr(annotation, '__origin__', None)
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError("Expected a list", key_path, repr(value))
        item_type = annotation.__args__[0]
        return [_coerce(item, item_type, f"{key_path}[{i}]") for i, item in enumerate(value)]
    raise ConfigurationError("Unsupported configuration type", key_path, repr(annotation))


def _section_from_dict(cls, data: Dict[str, Any], prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigurationError("Expected a mapping", prefix or "<root>", repr(data))

    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigurationError("Unknown configuration key", f"{prefix}{key}")

    kwargs = {}
    for name in names:
        if name not in data:
            continue
        annotation = hints[name]
        key_path = f"{prefix}{name}"
        if dataclasses.is_dataclass(annotation):
            kwargs[name] = _section_from_dict(annotation, data[name], f"{key_path}.")
        else:
            kwargs[name] = _coerce(data[name], annotation, key_path)
    return cls(**kwargs)


def validate_config(config: RunConfig) -> RunConfig:
    """
    Check cross-field constraints of a parsed configuration.

    Raises:
        ConfigurationError: If any constraint is violated
    """
    if config.algorithm not in ALGORITHMS:
        raise ConfigurationError(f"Algorithm must be one of {ALGORITHMS}", "algorithm", config.algorithm)
    for key_path, stage in [("training.stage", config.training.stage),
                            ("evaluation.stage", config.evaluation.stage)]:
        if stage not in STAGE_IDS:
            raise ConfigurationError(f"Stage must be one of {STAGE_IDS}", key_path, stage)
    stages = config.curriculum.stages
    if not stages:
        raise ConfigurationError("At least one curriculum stage is required", "curriculum.stages")
    for i, stage in enumerate(stages):
        if stage not in STAGE_IDS:
            raise ConfigurationError(f"Stage must be one of {STAGE_IDS}", f"curriculum.stages[{i}]", stage)
    if [STAGE_IDS.index(s) for s in stages] != sorted(set(STAGE_IDS.index(s) for s in stages)):
        raise ConfigurationError("Curriculum stages must be strictly ordered", "curriculum.stages",
                                 ", ".join(stages))
    if not 0 <= config.curriculum.threshold <= 1:
        raise ConfigurationError("Promotion threshold must lie in [0, 1]", "curriculum.threshold")
    if config.curriculum.window < 1:
        raise ConfigurationError("Promotion window must be at least 1", "curriculum.window")
    if len(config.env.noise_halfwidth) != C.OBSERVATION_DIM:
        raise ConfigurationError(f"Noise halfwidth needs {C.OBSERVATION_DIM} components",
                                 "env.noise_halfwidth")
    for key in ("workspace_low", "workspace_high", "fixed_start"):
        if len(getattr(config.env, key)) != 3:
            raise ConfigurationError("Expected a 3-vector", f"env.{key}")
    for key in ("mean_force", "gust_amplitude"):
        if len(getattr(config.wind, key)) != 3:
            raise ConfigurationError("Expected a 3-vector", f"wind.{key}")
    if config.env.max_steps <= 0:
        raise ConfigurationError("max_steps must be positive", "env.max_steps")
    if not config.network.hidden_sizes or min(config.network.hidden_sizes) < 1:
        raise ConfigurationError("Hidden sizes must be positive", "network.hidden_sizes")
    if not 0 < config.agent.tau <= 1:
        raise ConfigurationError("Target smooth factor must lie in (0, 1]", "agent.tau")
    if config.agent.batch_size < 1:
        raise ConfigurationError("Mini-batch size must be positive", "agent.batch_size")
    if not 0 <= config.agent.smoothing_decay_rate < 1:
        raise ConfigurationError("Smoothing decay rate must lie in [0, 1)", "agent.smoothing_decay_rate")
    for key in ("policy_update_frequency", "target_update_frequency"):
        if getattr(config.agent, key) < 1:
            raise ConfigurationError("Update frequencies must be at least 1", f"agent.{key}")
    return config


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Parse a configuration mapping strictly; missing keys take defaults."""
    return validate_config(_section_from_dict(RunConfig, data))


def config_to_dict(config: RunConfig) -> Dict[str, Any]:
    return dataclasses.asdict(config)


def parse_override(text: str):
    """
    Split a ``dotted.key=value`` override.

    The value is read as a JSON literal when possible, otherwise as a string.
    """
    if "=" not in text:
        raise ConfigurationError("Override must have the form key=value", text)
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides to a configuration mapping.

    Args:
        data: Configuration mapping (modified copy is returned)
        overrides: Strings of the form ``section.key=value``

    Returns:
        New mapping with overrides applied
    """
    result = json.loads(json.dumps(data))
    template = config_to_dict(RunConfig())
    for text in overrides:
        key, value = parse_override(text)
        parts = key.split(".")
        node, shape = result, template
        for depth, part in enumerate(parts[:-1]):
            if not isinstance(shape, dict) or part not in shape or not isinstance(shape[part], dict):
                raise ConfigurationError("Unknown configuration key", ".".join(parts[:depth + 1]))
            node = node.setdefault(part, {})
            shape = shape[part]
        if parts[-1] not in shape:
            raise ConfigurationError("Unknown configuration key", key)
        node[parts[-1]] = value
    return result


def load_config(path: str = None, overrides: Sequence[str] = ()) -> RunConfig:
    """
    Load a run configuration from a JSON file and apply overrides.

    Args:
        path: JSON file path, or None for the built-in defaults
        overrides: Dotted-key overrides

    Returns:
        Validated RunConfig
    """
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                data = json.load(handle)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in {path}", details=str(e))
        except OSError as e:
            raise ConfigurationError(f"Cannot read configuration file {path}", details=str(e))
    config = config_from_dict(apply_overrides(data, overrides))
    logger.info(f"Loaded configuration (algorithm={config.algorithm}, seed={config.seed})")
    return config


def dump_config(config: RunConfig) -> str:
    """Render a configuration as the JSON echo written next to run outputs."""
    return dump_json(config_to_dict(config))
