import math

# Application information
APP_NAME = "Deposition Drone RL Workbench"
APP_VERSION = "1.0.0"

# Logging format
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Checkpoint format
CHECKPOINT_FORMAT = "deposition-drone-checkpoint"
CHECKPOINT_VERSION = 1

# Physics defaults
GRAVITY = 9.81
SAMPLE_TIME = 0.01  # seconds
ATTITUDE_TIME_CONSTANT = 0.1  # seconds
DEFAULT_MASS = 0.7  # kg
MASS_FLOOR_FRACTION = 0.5
ATTITUDE_LIMIT = math.pi / 2

# Deposition material (aerial additive manufacturing cementitious mix)
MATERIAL_DENSITY = 1700.0  # kg/m^3
NOZZLE_DIAMETER = 0.008  # m
EXIT_VELOCITY = 0.5  # m/s

# Action ranges
THRUST_MAX = 10.0  # N
THRUST_MIN = 0.0

# Observation layout
OBSERVATION_DIM = 13
ACTION_DIM = 3
ACCELERATION_SLICE = slice(0, 3)

# Characteristic magnitude of each observation component; noise is 1% of it
OBSERVATION_SCALES = [
    10.0, 10.0, 10.0,
    10.0, 10.0, 10.0,
    5.0, 5.0, 5.0,
    ATTITUDE_LIMIT, ATTITUDE_LIMIT, ATTITUDE_LIMIT,
    5.0,
]
NOISE_FRACTION = 0.01

# Normalizer
SIGMA_FLOOR = 1e-6

# Episode defaults
WAYPOINT_ADVANCE_RADIUS = 0.1  # m
TERMINAL_VELOCITY = 0.1  # m/s
CRASH_HEIGHT = 0.1  # m
OUT_OF_BOUNDS_DISTANCE = 10.0  # m
MAX_EPISODE_STEPS = 2000
REWARD_WEIGHT = 1.0
WAYPOINT_BONUS = 10.0
DEVIATION_PENALTY = 0.1
DEMO_WAYPOINTS = 6

# Workspace box for random sampling: (low, high) per axis
WORKSPACE_LOW = [-5.0, -5.0, 0.5]
WORKSPACE_HIGH = [5.0, 5.0, 5.0]
FIXED_START = [0.0, 0.0, 1.0]

# Agent hyperparameters
LEARNING_RATE = 1e-3
GRADIENT_THRESHOLD = 1.0
DISCOUNT_FACTOR = 0.99
MINI_BATCH_SIZE = 256
BUFFER_LENGTH = 1_000_000
TARGET_SMOOTH_FACTOR = 5e-3
NUM_EPOCHS = 3
MAX_MINI_BATCH_PER_EPOCH = 100
POLICY_UPDATE_FREQUENCY = 1
TARGET_UPDATE_FREQUENCY = 1
HIDDEN_SIZES = [400, 300]

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Exploration noise
MEAN_ATTRACTION = 1.0
NOISE_STD = 0.1
SMOOTHING_STD = 0.05
SMOOTHING_STD_MIN = 0.05
SMOOTHING_LIMIT = 0.5
SMOOTHING_DECAY_RATE = 0.0  # per TD3 update; 0 keeps the std constant

# Curriculum promotion
PROMOTION_WINDOW = 50
PROMOTION_THRESHOLD = 0.8
PROMOTION_MIN_EPISODES = 100

# Evaluation
EVAL_TRIALS = 100
CHECKPOINT_EVERY = 100
REWARD_AVERAGE_WINDOW = 20

# Output file names
RESOLVED_CONFIG_FILE = "resolved_config.json"
EPISODE_LOG_FILE = "episodes.csv"
STAGE_LOG_FILE = "stages.csv"
FINAL_CHECKPOINT_FILE = "final.ckpt.npz"
TRIALS_FILE = "trials.csv"
ERRORS_FILE = "errors.csv"
SUMMARY_FILE = "summary.json"
TRAJECTORY_FILE = "trajectory.json"
REPORT_FILE = "evaluation_report.pdf"
RUN_LOG_FILE = "run.log"
