"""Planar kinematics for the robot (single integrator) and the obstacles.

Obstacles follow a known constant-velocity policy perturbed by a bounded
speed offset and a bounded heading offset. The robot integrates its
velocity command directly, saturated at a maximum speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidCommandError

DEFAULT_MAX_SPEED = 2.5


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def _vec(v) -> np.ndarray:
    return np.array(v, dtype=np.float64).reshape(2)


@dataclass(frozen=True)
class RobotState:
    position: np.ndarray
    heading: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


@dataclass(frozen=True)
class Command:
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "velocity", _vec(self.velocity))

    @property
    def speed(self) -> float:
        return float(math.hypot(self.velocity[0], self.velocity[1]))


@dataclass(frozen=True)
class ObstacleState:
    position: np.ndarray
    heading: float
    speed: float
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position))
        if not self.speed >= 0.0:
            raise ValueError(f"obstacle speed must be >= 0, got {self.speed}")


@dataclass(frozen=True)
class NoiseBounds:
    speed_bound: float = 0.0
    heading_bound: float = 0.0

    def __post_init__(self):
        if self.speed_bound < 0.0 or self.heading_bound < 0.0:
            raise ValueError("noise bounds must be non-negative")


@dataclass(frozen=True)
class NoiseSample:
    speed_offset: float = 0.0
    heading_offset: float = 0.0


ZERO_NOISE = NoiseSample()


def saturate(velocity, max_speed: float) -> np.ndarray:
    """Scale ``velocity`` down so its norm does not exceed ``max_speed``."""
    v = _vec(velocity)
    speed = math.hypot(v[0], v[1])
    if speed > max_speed:
        v = v * (max_speed / speed)
    return v


def make_command(velocity, max_speed: float = DEFAULT_MAX_SPEED) -> Command:
    v = _vec(velocity)
    if not np.all(np.isfinite(v)):
        raise InvalidCommandError(f"non-finite command {v.tolist()}")
    return Command(saturate(v, max_speed))


def step_robot(state: RobotState, cmd: Command, dt: float,
               max_speed: float = DEFAULT_MAX_SPEED) -> RobotState:
    """Euler step of x' = u with speed saturation.

    Heading follows the commanded velocity; a zero command keeps the
    previous heading.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v = cmd.velocity
    if not np.all(np.isfinite(v)):
        raise InvalidCommandError(f"non-finite command {v.tolist()}")
    v = saturate(v, max_speed)
    heading = state.heading
    if v[0] != 0.0 or v[1] != 0.0:
        heading = math.atan2(v[1], v[0])
    return RobotState(state.position + v * dt, heading, state.time + dt)


def step_obstacle(state: ObstacleState, noise: NoiseSample, dt: float) -> ObstacleState:
    """Advance an obstacle by ``dt`` under its nominal velocity plus ``noise``.

    The nominal heading and speed fields are left untouched; only the
    position and timestamp move.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    speed = state.speed + noise.speed_offset
    heading = state.heading + noise.heading_offset
    if not (math.isfinite(speed) and math.isfinite(heading)):
        raise ValueError("non-finite obstacle noise")
    step = np.array([math.cos(heading), math.sin(heading)]) * (speed * dt)
    return replace(state, position=state.position + step, timestamp=state.timestamp + dt)


def sample_noise(bounds: NoiseBounds, rng: np.random.Generator) -> NoiseSample:
    """Uniform draw from the noise box. Always consumes two variates."""
    u = rng.uniform(-1.0, 1.0, size=2)
    return NoiseSample(float(u[0] * bounds.speed_bound), float(u[1] * bounds.heading_bound))


@dataclass
class Footprint:
    """Rectangular obstacle body, inflated to its circumscribed circle."""

    length: float = 0.0
    width: float = 0.0
    radius: float = field(init=False)

    def __post_init__(self):
        self.radius = 0.5 * math.hypot(self.length, self.width)
