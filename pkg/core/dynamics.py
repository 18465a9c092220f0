import math
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from utils.constants import (
    GRAVITY, SAMPLE_TIME, ATTITUDE_TIME_CONSTANT, ATTITUDE_LIMIT,
    DEFAULT_MASS, MASS_FLOOR_FRACTION, MATERIAL_DENSITY, NOZZLE_DIAMETER,
    EXIT_VELOCITY, THRUST_MIN, THRUST_MAX
)
from utils.exceptions import DomainError
from utils.helpers import as_vector

# Initialize logger
logger = logging.getLogger(__name__)

Z_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass
class DroneState:
    """
    Full simulator truth for the multirotor.

    Roll, pitch and yaw are in radians; position in m, velocity in m/s,
    acceleration in m/s^2, mass in kg.
    """
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    roll: float
    pitch: float
    yaw: float
    mass: float

    def __post_init__(self):
        self.position = as_vector(self.position)
        self.velocity = as_vector(self.velocity)
        self.acceleration = as_vector(self.acceleration)
        if not self.mass > 0:
            raise DomainError("Drone mass must be positive", f"mass={self.mass}")

    @classmethod
    def at_rest(cls, position, mass: float = DEFAULT_MASS, yaw: float = 0.0) -> "DroneState":
        """Create a stationary, level state at the given position."""
        return cls(
            position=position,
            velocity=np.zeros(3),
            acceleration=np.zeros(3),
            roll=0.0,
            pitch=0.0,
            yaw=yaw,
            mass=mass,
        )

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    @property
    def height(self) -> float:
        return float(self.position[2])

    def copy(self) -> "DroneState":
        return DroneState(
            position=self.position.copy(),
            velocity=self.velocity.copy(),
            acceleration=self.acceleration.copy(),
            roll=self.roll,
            pitch=self.pitch,
            yaw=self.yaw,
            mass=self.mass,
        )


@dataclass(frozen=True)
class ScaledAction:
    """Physical command: roll and pitch in rad, thrust in N."""
    roll: float
    pitch: float
    thrust: float


@dataclass(frozen=True)
class DepositionModel:
    """Material extrusion through a round nozzle."""
    density: float = MATERIAL_DENSITY
    nozzle_diameter: float = NOZZLE_DIAMETER
    exit_velocity: float = EXIT_VELOCITY
    active: bool = False

    def __post_init__(self):
        if self.active and min(self.density, self.nozzle_diameter, self.exit_velocity) <= 0:
            raise DomainError(
                "Deposition parameters must be positive when active",
                f"density={self.density}, nozzle_diameter={self.nozzle_diameter}, "
                f"exit_velocity={self.exit_velocity}"
            )

    @property
    def mass_flow_rate(self) -> float:
        """Extruded mass per second (kg/s); zero when inactive."""
        if not self.active:
            return 0.0
        return mass_flow_rate(self.density, self.nozzle_diameter, self.exit_velocity)

    @property
    def force(self) -> float:
        """Magnitude of the downward reaction force (N); zero when inactive."""
        if not self.active:
            return 0.0
        return deposition_force(self.mass_flow_rate, self.exit_velocity)


@dataclass
class WindModel:
    """
    Constant bias force plus independent uniform gusts drawn every step.

    A model with zero mean and zero gust amplitude contributes exactly zero
    force and never consumes random draws.
    """
    mean_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_amplitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rng: Optional[np.random.Generator] = None

    def __post_init__(self):
        self.mean_force = as_vector(self.mean_force)
        self.gust_amplitude = as_vector(self.gust_amplitude)
        if np.any(self.gust_amplitude < 0):
            raise DomainError("Gust amplitude components must be non-negative",
                              f"gust_amplitude={self.gust_amplitude.tolist()}")

    @property
    def is_gusty(self) -> bool:
        return bool(np.any(self.gust_amplitude > 0))

    def sample_force(self) -> np.ndarray:
        """Wind force (N) acting during the next step."""
        force = self.mean_force.copy()
        if self.is_gusty:
            if self.rng is None:
                raise DomainError("Gusty wind model requires a random stream")
            force += self.gust_amplitude * self.rng.uniform(-1.0, 1.0, size=3)
        return force


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float = GRAVITY
    dt: float = SAMPLE_TIME
    attitude_time_constant: float = ATTITUDE_TIME_CONSTANT
    min_mass: float = DEFAULT_MASS * MASS_FLOOR_FRACTION

    def __post_init__(self):
        if self.dt <= 0 or self.attitude_time_constant <= 0:
            raise DomainError(
                "Timestep and attitude time constant must be positive",
                f"dt={self.dt}, attitude_time_constant={self.attitude_time_constant}"
            )
        if self.min_mass <= 0:
            raise DomainError("Mass floor must be positive", f"min_mass={self.min_mass}")

    def with_mass_floor(self, initial_mass: float, fraction: float = MASS_FLOOR_FRACTION) -> "PhysicsParams":
        """Copy of these parameters with the mass floor tied to an initial mass."""
        return replace(self, min_mass=initial_mass * fraction)


def mass_flow_rate(density: float, nozzle_diameter: float, exit_velocity: float) -> float:
    """
    Mass flow rate of material through a round nozzle.

    Args:
        density: Material density (kg/m^3)
        nozzle_diameter: Nozzle diameter (m)
        exit_velocity: Velocity of material leaving the nozzle (m/s)

    Returns:
        rho * pi * (d/2)^2 * v_exit in kg/s
    """
    if density <= 0 or nozzle_diameter <= 0 or exit_velocity <= 0:
        raise DomainError(
            "Mass flow inputs must be positive",
            f"density={density}, nozzle_diameter={nozzle_diameter}, exit_velocity={exit_velocity}"
        )
    area = math.pi * (nozzle_diameter / 2.0) ** 2
    return density * area * exit_velocity


def deposition_force(mdot: float, exit_velocity: float) -> float:
    """Reaction force magnitude (N) of extrusion; it acts along -z."""
    if mdot < 0 or exit_velocity < 0:
        raise DomainError("Deposition force inputs must be non-negative",
                          f"mdot={mdot}, exit_velocity={exit_velocity}")
    return mdot * exit_velocity


def deposition_acceleration(force: float, mass: float) -> float:
    """Acceleration magnitude (m/s^2) the deposition force imparts on the vehicle."""
    if mass <= 0:
        raise DomainError("Mass must be positive", f"mass={mass}")
    return force / mass


def attitude_track(current: float, commanded: float, time_constant: float, dt: float) -> float:
    """
    First-order lag of an attitude angle towards its command.

    The result is clamped to the roll/pitch bound; when dt >= time_constant the
    command is reached in one step.
    """
    if dt <= 0 or time_constant <= 0:
        raise DomainError("Attitude tracking requires positive dt and time constant",
                          f"dt={dt}, time_constant={time_constant}")
    ratio = dt / time_constant
    if ratio >= 1.0:
        angle = commanded
    else:
        angle = current + (commanded - current) * ratio
    return float(min(max(angle, -ATTITUDE_LIMIT), ATTITUDE_LIMIT))


def rotation_matrix(roll: float, pitch: float) -> np.ndarray:
    """Body-to-world rotation applying roll about x, then pitch about y (yaw fixed at 0)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    roll_rot = np.array([
        [1.0, 0.0, 0.0],
        [0.0, cr, -sr],
        [0.0, sr, cr],
    ])
    pitch_rot = np.array([
        [cp, 0.0, sp],
        [0.0, 1.0, 0.0],
        [-sp, 0.0, cp],
    ])
    return pitch_rot @ roll_rot


def hover_thrust(mass: float, gravity: float = GRAVITY) -> float:
    """Thrust (N) balancing gravity for a level vehicle."""
    return mass * gravity


def step(state: DroneState,
         command: ScaledAction,
         physics: PhysicsParams,
         deposition: Optional[DepositionModel] = None,
         wind: Optional[WindModel] = None) -> DroneState:
    """
    Advance the flight model by one timestep.

    Attitude follows the command through a first-order lag, translational
    motion uses semi-implicit Euler, and active deposition both pushes the
    vehicle down and depletes its mass down to the configured floor.

    Args:
        state: Current simulator truth
        command: Scaled roll/pitch/thrust command
        physics: Physical constants and integration parameters
        deposition: Optional deposition model
        wind: Optional wind model

    Returns:
        New DroneState; the input is not modified
    """
    dt = physics.dt
    roll = attitude_track(state.roll, command.roll, physics.attitude_time_constant, dt)
    pitch = attitude_track(state.pitch, command.pitch, physics.attitude_time_constant, dt)
    thrust = min(max(command.thrust, THRUST_MIN), THRUST_MAX)
    mass = state.mass

    thrust_world = rotation_matrix(roll, pitch) @ np.array([0.0, 0.0, thrust])
    acceleration = thrust_world / mass - physics.gravity * Z_AXIS

    if deposition is not None and deposition.active:
        acceleration = acceleration - deposition_acceleration(deposition.force, mass) * Z_AXIS
    if wind is not None:
        acceleration = acceleration + wind.sample_force() / mass

    velocity = state.velocity + acceleration * dt
    position = state.position + velocity * dt

    if deposition is not None and deposition.active:
        floor = min(physics.min_mass, mass)
        mass = max(mass - deposition.mass_flow_rate * dt, floor)

    return DroneState(
        position=position,
        velocity=velocity,
        acceleration=acceleration,
        roll=roll,
        pitch=pitch,
        yaw=state.yaw,
        mass=mass,
    )
