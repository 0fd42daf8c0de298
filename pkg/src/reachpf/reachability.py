"""Forward reachable sets of constant-velocity obstacles with bounded noise.

An obstacle reported at ``o`` at time ``t0`` with nominal heading ``theta``
and speed ``v`` can, ``s`` seconds later, be anywhere in the annular sector

    { o + r (cos phi, sin phi) : phi in [theta - dh, theta + dh],
                                 r in [(v - dw) s cos dh, (v + dw) s] }

dilated by the obstacle's footprint radius. The ``cos dh`` factor on the
inner radius keeps the set sound when the offsets are resampled every step
(a path with wiggling heading covers less ground along the mean heading).
The union over a window ``[t1, t2]`` is a single sector spanning radii
``[r_lo(t1), r_hi(t2)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import NoiseBounds, ObstacleState

SECTOR = "sector"
HULL = "hull"

# containment slack, relative to the outer radius
_CONTAIN_RTOL = 1e-9


@dataclass(frozen=True)
class ReachTube:
    origin: np.ndarray
    t0: float
    heading: float
    half_width: float
    speed_lo: float
    speed_hi: float
    horizon: float
    footprint_radius: float = 0.0
    mode: str = SECTOR

    def __post_init__(self):
        object.__setattr__(self, "origin", np.array(self.origin, dtype=np.float64).reshape(2))
        if not self.horizon > 0.0:
            raise ValueError(f"tube horizon must be positive, got {self.horizon}")
        if not 0.0 <= self.speed_lo <= self.speed_hi:
            raise ValueError("speed interval must satisfy 0 <= lo <= hi")
        if not 0.0 <= self.half_width <= 0.5 * math.pi:
            raise ValueError("heading interval width must lie in [0, pi]")
        if self.footprint_radius < 0.0:
            raise ValueError("footprint radius must be non-negative")
        if self.mode not in (SECTOR, HULL):
            raise ValueError(f"unknown tube mode {self.mode!r}")

    @property
    def heading_interval(self) -> tuple[float, float]:
        return (self.heading - self.half_width, self.heading + self.half_width)

    @property
    def speed_interval(self) -> tuple[float, float]:
        return (self.speed_lo, self.speed_hi)

    @property
    def t_end(self) -> float:
        return self.t0 + self.horizon

    def r_lo(self, t: float) -> float:
        return self.speed_lo * max(t - self.t0, 0.0) * math.cos(self.half_width)

    def r_hi(self, t: float) -> float:
        return self.speed_hi * max(t - self.t0, 0.0)

    @property
    def max_extent(self) -> float:
        """Largest distance from the origin to any point of the tube."""
        return self.r_hi(self.t_end) + self.footprint_radius

    def slice(self, t1: float, t2: float | None = None) -> "TubeSlice":
        return TubeSlice(self, t1, self.t_end if t2 is None else t2)


@dataclass(frozen=True)
class TubeSlice:
    tube: ReachTube
    t1: float
    t2: float

    def __post_init__(self):
        tube = self.tube
        if not tube.t0 <= self.t1 <= self.t2:
            raise ValueError(f"slice window must satisfy t0 <= t1 <= t2, got "
                             f"{tube.t0}, {self.t1}, {self.t2}")

    @property
    def radii(self) -> tuple[float, float]:
        return self.tube.r_lo(self.t1), self.tube.r_hi(self.t2)


@dataclass(frozen=True)
class ClosestPoint:
    point: np.ndarray
    distance: float


def forward_reach_tube(obs: ObstacleState, bounds: NoiseBounds, T: float,
                       footprint_radius: float = 0.0, mode: str = SECTOR) -> ReachTube:
    return ReachTube(
        origin=obs.position,
        t0=obs.timestamp,
        heading=obs.heading,
        half_width=bounds.heading_bound,
        speed_lo=max(obs.speed - bounds.speed_bound, 0.0),
        speed_hi=obs.speed + bounds.speed_bound,
        horizon=T,
        footprint_radius=footprint_radius,
        mode=mode,
    )


def _segment_closest(qa, qb, pa, pb, ra, rb):
    """Closest point on segment (pa,pb)-(ra,rb) to (qa,qb), squared distance."""
    ea = ra - pa
    eb = rb - pb
    den = ea * ea + eb * eb
    u = 0.0 if den == 0.0 else min(max(((qa - pa) * ea + (qb - pb) * eb) / den, 0.0), 1.0)
    ca = pa + u * ea
    cb = pb + u * eb
    return ca, cb, (qa - ca) ** 2 + (qb - cb) ** 2


def _hull_closest(q, tube: ReachTube, r_lo: float, r_hi: float):
    """Closest point of the convex hull of the undilated sector."""
    ox, oy = tube.origin
    c, s = math.cos(tube.heading), math.sin(tube.heading)
    dx, dy = q[0] - ox, q[1] - oy
    a = c * dx + s * dy
    b = -s * dx + c * dy
    hw = tube.half_width
    rho = math.hypot(a, b)
    beta = math.atan2(b, a) if rho > 0.0 else 0.0
    chord = r_lo * math.cos(hw)
    if abs(beta) <= hw and rho <= r_hi and a >= chord:
        return float(q[0]), float(q[1]), 0.0
    ch, sh = math.cos(hw), math.sin(hw)
    candidates = [
        _segment_closest(a, b, r_lo * ch, r_lo * sh, r_hi * ch, r_hi * sh),
        _segment_closest(a, b, r_lo * ch, -r_lo * sh, r_hi * ch, -r_hi * sh),
        _segment_closest(a, b, r_lo * ch, -r_lo * sh, r_lo * ch, r_lo * sh),
    ]
    phi = min(max(beta, -hw), hw)
    oa, ob = r_hi * math.cos(phi), r_hi * math.sin(phi)
    candidates.append((oa, ob, (a - oa) ** 2 + (b - ob) ** 2))
    la, lb, _ = min(candidates, key=lambda item: item[2])
    px = ox + c * la - s * lb
    py = oy + s * la + c * lb
    return px, py, math.hypot(q[0] - px, q[1] - py)


def _undilated(slc: TubeSlice, qx: float, qy: float):
    tube = slc.tube
    r_lo, r_hi = slc.radii
    if tube.mode == HULL:
        return _hull_closest((qx, qy), tube, r_lo, r_hi)
    return kernels.sector_closest(qx, qy, tube.origin[0], tube.origin[1], tube.heading,
                                  tube.half_width, r_lo, r_hi)


def closest_point(slc: TubeSlice, query) -> ClosestPoint:
    """Closest point of the dilated slice to ``query``.

    Inside the slice the query itself is returned with distance 0.
    """
    qx, qy = float(query[0]), float(query[1])
    px, py, d0 = _undilated(slc, qx, qy)
    radius = slc.tube.footprint_radius
    if d0 <= radius:
        return ClosestPoint(np.array([qx, qy]), 0.0)
    if radius > 0.0:
        k = radius / d0
        px += (qx - px) * k
        py += (qy - py) * k
    return ClosestPoint(np.array([px, py]), d0 - radius)


def undilated_closest(slc: TubeSlice, query) -> ClosestPoint:
    """Closest point of the slice before footprint dilation."""
    px, py, d0 = _undilated(slc, float(query[0]), float(query[1]))
    return ClosestPoint(np.array([px, py]), d0)


def contains(slc: TubeSlice, point) -> bool:
    """True iff ``point`` lies within the footprint radius of the slice.

    A relative slack of 1e-9 of the outer radius absorbs rounding on the
    boundary.
    """
    _, _, d0 = _undilated(slc, float(point[0]), float(point[1]))
    slack = _CONTAIN_RTOL * max(1.0, slc.radii[1])
    return d0 <= slc.tube.footprint_radius + slack


def sector_closest_array(qx, qy, ox, oy, heading, half_width, r_lo, r_hi):
    """Broadcasting version of ``kernels.sector_closest``.

    Any argument may be an array; returns ``(px, py, distance)`` arrays.
    """
    qx, qy, r_lo, r_hi = (np.asarray(v, dtype=np.float64) for v in (qx, qy, r_lo, r_hi))
    c, s = math.cos(heading), math.sin(heading)
    dx = qx - ox
    dy = qy - oy
    a = c * dx + s * dy
    b = -s * dx + c * dy
    rho = np.hypot(a, b)
    beta = np.arctan2(b, a)
    hw = half_width

    in_wedge = np.abs(beta) <= hw
    r = np.where(rho < r_lo, r_lo, np.where(rho > r_hi, r_hi, rho))
    pos = rho > 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = r / np.where(pos, rho, 1.0)
    la = np.where(pos, a * ratio, r_lo)
    lb = np.where(pos, b * ratio, 0.0)

    edge = []
    for side in (hw, -hw):
        ea, eb = math.cos(side), math.sin(side)
        re = a * ea + b * eb
        re = np.where(re < r_lo, r_lo, np.where(re > r_hi, r_hi, re))
        ca, cb = re * ea, re * eb
        edge.append((ca, cb, (a - ca) ** 2 + (b - cb) ** 2))
    take_second = edge[1][2] < edge[0][2]
    ea_best = np.where(take_second, edge[1][0], edge[0][0])
    eb_best = np.where(take_second, edge[1][1], edge[0][1])
    la = np.where(in_wedge, la, ea_best)
    lb = np.where(in_wedge, lb, eb_best)
    inside = (in_wedge & (rho >= r_lo) & (rho <= r_hi)) | (~pos & (r_lo <= 0.0))

    px = ox + c * la - s * lb
    py = oy + s * la + c * lb
    px = np.where(inside, qx, px)
    py = np.where(inside, qy, py)
    return px, py, np.hypot(qx - px, qy - py)


def _dilate_array(qx, qy, px, py, d0, radius):
    covered = d0 <= radius
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(covered, 0.0, radius / np.where(d0 > 0.0, d0, 1.0))
    px = np.where(covered, qx, px + (qx - px) * k)
    py = np.where(covered, qy, py + (qy - py) * k)
    return px, py, np.where(covered, 0.0, d0 - radius)


def closest_point_batch(slc: TubeSlice, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``closest_point`` over an ``(n, 2)`` array of queries."""
    tube = slc.tube
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 2)
    if tube.mode != SECTOR:
        pts = [closest_point(slc, row) for row in q]
        return (np.array([p.point for p in pts]).reshape(-1, 2),
                np.array([p.distance for p in pts]))
    r_lo, r_hi = slc.radii
    px, py, d0 = sector_closest_array(q[:, 0], q[:, 1], tube.origin[0], tube.origin[1],
                                      tube.heading, tube.half_width, r_lo, r_hi)
    px, py, dist = _dilate_array(q[:, 0], q[:, 1], px, py, d0, tube.footprint_radius)
    return np.stack([px, py], axis=1), dist


def sample_reach(obs: ObstacleState, bounds: NoiseBounds, t: float, n: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Endpoints at time ``t`` of ``n`` runs with constant random offsets.

    Each run holds one uniform (speed, heading) offset for its whole
    duration, which is what one ``step_obstacle`` call over ``t - t0``
    computes.
    """
    elapsed = t - obs.timestamp
    if elapsed < 0.0:
        raise ValueError("sample time precedes the obstacle timestamp")
    if n == 0:
        return np.empty((0, 2))
    u = rng.uniform(-1.0, 1.0, size=(n, 2))
    speed = obs.speed + u[:, 0] * bounds.speed_bound
    heading = obs.heading + u[:, 1] * bounds.heading_bound
    reach = speed * elapsed
    return np.stack([obs.position[0] + reach * np.cos(heading),
                     obs.position[1] + reach * np.sin(heading)], axis=1)


def simulate_endpoints(obs: ObstacleState, bounds: NoiseBounds, t: float, n: int,
                       rng: np.random.Generator, dt: float = 0.1) -> np.ndarray:
    """Endpoints of ``n`` runs whose offsets are redrawn every ``dt``.

    Mirrors the simulator's per-step noise model, vectorised over runs.
    """
    elapsed = t - obs.timestamp
    steps = int(round(elapsed / dt))
    pos = np.tile(obs.position, (n, 1))
    for _ in range(steps):
        u = rng.uniform(-1.0, 1.0, size=(n, 2))
        speed = obs.speed + u[:, 0] * bounds.speed_bound
        heading = obs.heading + u[:, 1] * bounds.heading_bound
        pos[:, 0] += speed * dt * np.cos(heading)
        pos[:, 1] += speed * dt * np.sin(heading)
    return pos


class Flowpipe:
    """Reach tube rebuilt by stepwise set propagation.

    Stands in for a general-purpose reachability tool: the enclosure is
    propagated interval by interval from ``t0`` to ``t0 + T`` and a query
    scans every segment overlapping the window. Much slower than the
    closed form and slightly more conservative (by at most one step).
    """

    def __init__(self, obs: ObstacleState, bounds: NoiseBounds, T: float,
                 footprint_radius: float = 0.0, step: float = 0.1):
        self.origin = obs.position.copy()
        self.t0 = obs.timestamp
        self.heading = obs.heading
        self.half_width = bounds.heading_bound
        self.footprint_radius = footprint_radius
        v_lo = max(obs.speed - bounds.speed_bound, 0.0) * math.cos(bounds.heading_bound)
        v_hi = obs.speed + bounds.speed_bound
        n = max(int(math.ceil(T / step - 1e-12)), 1)
        self.t_start = []
        self.t_stop = []
        self.r_lo = []
        self.r_hi = []
        lo = hi = 0.0
        t = self.t0
        for k in range(n):
            stop = self.t0 + T if k == n - 1 else self.t0 + (k + 1) * step
            h = stop - t
            self.t_start.append(t)
            self.r_lo.append(lo)
            lo += v_lo * h
            hi += v_hi * h
            t = stop
            self.t_stop.append(t)
            self.r_hi.append(hi)
        self.t_start = np.array(self.t_start)
        self.t_stop = np.array(self.t_stop)
        self.r_lo = np.array(self.r_lo)
        self.r_hi = np.array(self.r_hi)

    def closest_point(self, query, t1: float) -> ClosestPoint:
        """Closest point over every segment whose interval reaches ``t1``."""
        qx, qy = float(query[0]), float(query[1])
        first = min(int(np.searchsorted(self.t_stop, t1, side="left")), len(self.t_stop) - 1)
        px, py, d0 = sector_closest_array(qx, qy, self.origin[0], self.origin[1], self.heading,
                                          self.half_width, self.r_lo[first:],
                                          self.r_hi[first:])
        k = int(np.argmin(d0))
        px, py, dist = _dilate_array(qx, qy, px[k], py[k], d0[k], self.footprint_radius)
        return ClosestPoint(np.array([float(px), float(py)]), float(dist))
