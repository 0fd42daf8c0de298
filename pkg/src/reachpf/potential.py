"""Reach-tube potential field and its gradient-descent control law.

The attractive term is the usual quadratic bowl around the goal. Each
obstacle contributes ``0.5 k_r / (d - delta)^2`` where ``d`` is the
distance from the robot to the closest point of the obstacle's tube slice
covering the rest of the horizon. Control is the negative gradient of the
sum, summed over obstacles in index order, then speed-saturated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import DEFAULT_MAX_SPEED, Command, make_command
from .errors import SafetyMarginBreached
from .reachability import ClosestPoint, TubeSlice, closest_point


@dataclass(frozen=True)
class Gains:
    k_p: float
    k_r: float
    delta: float

    def __post_init__(self):
        if not (self.k_p > 0 and self.k_r > 0 and self.delta > 0):
            raise ValueError(f"gains must be positive: {self}")


def attractive_value(x_p, x_g, k_p: float) -> float:
    d = np.asarray(x_p, dtype=float) - np.asarray(x_g, dtype=float)
    return 0.5 * k_p * float(d @ d)


def attractive_gradient(x_p, x_g, k_p: float) -> np.ndarray:
    return k_p * (np.asarray(x_p, dtype=float) - np.asarray(x_g, dtype=float))


def repulsive_value(x_p, cp: ClosestPoint, k_r: float, delta: float) -> float:
    if not cp.distance > delta:
        raise SafetyMarginBreached(cp.distance, delta)
    return 0.5 * k_r * (1.0 / (cp.distance - delta)) ** 2


def gradient_from_closest(x_p, cp: ClosestPoint, k_r: float, delta: float) -> np.ndarray:
    """Repulsive gradient with the closest point held fixed."""
    d = cp.distance
    if not d > delta:
        raise SafetyMarginBreached(d, delta)
    x_p = np.asarray(x_p, dtype=float)
    unit = (x_p - cp.point) / d
    return -k_r * unit / (d - delta) ** 3


def repulsive_gradient(x_p, slc: TubeSlice, k_r: float, delta: float) -> np.ndarray:
    return gradient_from_closest(x_p, closest_point(slc, x_p), k_r, delta)


def composed_velocity(x_p, x_g, slices: Sequence[TubeSlice], gains: Gains) -> np.ndarray:
    """Unsaturated descent direction ``-grad U``."""
    u = -attractive_gradient(x_p, x_g, gains.k_p)
    for slc in slices:
        u = u - repulsive_gradient(x_p, slc, gains.k_r, gains.delta)
    return u


def composed_control(x_p, x_g, slices: Sequence[TubeSlice], gains: Gains,
                     max_speed: float = DEFAULT_MAX_SPEED) -> Command:
    return make_command(composed_velocity(x_p, x_g, slices, gains), max_speed)


def composed_value(x_p, x_g, slices: Sequence[TubeSlice], gains: Gains) -> float:
    value = attractive_value(x_p, x_g, gains.k_p)
    for slc in slices:
        value += repulsive_value(x_p, closest_point(slc, x_p), gains.k_r, gains.delta)
    return value


def near_kink(slc: TubeSlice, x_p, margin: float) -> bool:
    """Whether ``x_p`` is within ``margin`` of a switch in the closest-point map.

    The map switches where the query's polar angle crosses an edge of the
    heading interval, where its radius crosses the inner or outer radius,
    and on the bisector behind the apex where the two edges tie.
    """
    tube = slc.tube
    r_lo, r_hi = slc.radii
    d = np.asarray(x_p, dtype=float) - tube.origin
    rho = math.hypot(d[0], d[1])
    if rho < margin:
        return True
    beta = math.remainder(math.atan2(d[1], d[0]) - tube.heading, 2 * math.pi)
    angular = rho * min(abs(abs(beta) - tube.half_width), abs(beta), math.pi - abs(beta))
    return angular < margin or abs(rho - r_lo) < margin or abs(rho - r_hi) < margin
