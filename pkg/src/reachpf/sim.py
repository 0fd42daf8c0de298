"""Fixed-step scenario simulator with intermittent obstacle reports.

The world advances every ``dt``: obstacles move under freshly drawn bounded
noise, the robot integrates its saturated command. Controllers only see
the most recent report of each obstacle, delivered by an ``InfoChannel``
at scheduled broadcast times. A monitor records distances to the reach
tubes and to the true obstacles and stops the run on goal arrival,
timeout, or a safety violation.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (DEFAULT_MAX_SPEED, Command, Footprint, NoiseBounds, ObstacleState,
                       RobotState, make_command, sample_noise, step_obstacle, step_robot)
from .errors import OutOfDomainError
from .nn import Mlp, infer
from .potential import Gains, attractive_gradient, gradient_from_closest
from .reachability import ReachTube, closest_point, forward_reach_tube, undilated_closest

SCENARIO_SCHEMA = "reachpf-scenario"
SCENARIO_VERSION = 1

NN = "nn"
EXACT_PF = "exact-pf"
NOISE_FREE_PF = "noise-free-pf"
POINT_PF = "point-pf"
CONTROLLERS = (NN, EXACT_PF, NOISE_FREE_PF)
ALL_CONTROLLERS = CONTROLLERS + (POINT_PF,)

GOAL_REACHED = "goal-reached"
TIMEOUT = "timeout"
SAFETY_VIOLATION = "safety-violation"
OUT_OF_DOMAIN = "out-of-domain"

# command magnitude used to back out of a tube the controller already touches
_ESCAPE_GAIN = 1e6


@dataclass
class ObstacleSpec:
    initial: ObstacleState
    bounds: NoiseBounds
    footprint: Footprint = field(default_factory=Footprint)


@dataclass
class Scenario:
    name: str
    robot_start: np.ndarray
    goal: np.ndarray
    obstacles: list[ObstacleSpec]
    gains: Gains
    horizon: float
    info_times: list[float] = field(default_factory=lambda: [0.0])
    info_random: dict | None = None
    max_speed: float = DEFAULT_MAX_SPEED
    dt: float = 0.1
    time_budget: float | None = None
    goal_tolerance: float = 1.0
    robot_heading: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.robot_start = np.asarray(self.robot_start, dtype=np.float64).reshape(2)
        self.goal = np.asarray(self.goal, dtype=np.float64).reshape(2)
        if self.time_budget is None:
            straight = float(np.linalg.norm(self.goal - self.robot_start)) / self.max_speed
            self.time_budget = 3.0 * straight
        self.validate()

    def validate(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt: must be positive")
        if not self.time_budget > 0.0:
            raise ValueError("time_budget: must be positive")
        if not self.max_speed > 0.0:
            raise ValueError("max_speed: must be positive")
        if not self.horizon > 0.0:
            raise ValueError("horizon: must be positive")
        if list(self.info_times) != sorted(self.info_times):
            raise ValueError("info_times: must be sorted")

    def broadcast_times(self) -> list[float]:
        """Scheduled times plus any drawn from the random-interval spec."""
        times = [float(t) for t in self.info_times]
        spec = self.info_random
        if spec:
            rng = np.random.default_rng([self.seed, 7])
            t = float(spec.get("start", 0.0))
            while t <= self.time_budget:
                times.append(t)
                t += float(rng.uniform(spec["min_interval"], spec["max_interval"]))
        return sorted(times)


class InfoChannel:
    """Delivers noiseless snapshots of obstacle states at broadcast times.

    Only ``poll`` touches the world; controllers read ``reports``, which
    hold for each obstacle the latest snapshot and its receipt time.
    """

    def __init__(self, schedule: list[float], n_obstacles: int):
        self.schedule = list(schedule)
        self.reports: list[tuple[ObstacleState, float] | None] = [None] * n_obstacles
        self._next = 0

    def poll(self, now: float, world: list[ObstacleState], eps: float = 1e-9) -> bool:
        """Deliver every broadcast due by ``now``. Returns True if any arrived."""
        fresh = False
        while self._next < len(self.schedule) and self.schedule[self._next] <= now + eps:
            self._next += 1
            fresh = True
        if fresh:
            for i, obs in enumerate(world):
                snap = ObstacleState(obs.position.copy(), obs.heading, obs.speed, now)
                self.reports[i] = (snap, now)
        return fresh


@dataclass
class Trace:
    n_obstacles: int
    times: list[float] = field(default_factory=list)
    robot: list[tuple[float, float]] = field(default_factory=list)
    commands: list[tuple[float, float]] = field(default_factory=list)
    obstacles: list[list[tuple[float, float, float, float, float]]] = field(default_factory=list)
    status: str = TIMEOUT
    horizon_expired: bool = False
    controller_breaches: int = 0
    iteration_seconds: list[float] = field(default_factory=list)
    message: str = ""

    def __len__(self) -> int:
        return len(self.times)

    def record(self, t, robot_pos, cmd, per_obs) -> None:
        self.times.append(t)
        self.robot.append((float(robot_pos[0]), float(robot_pos[1])))
        self.commands.append((float(cmd[0]), float(cmd[1])))
        self.obstacles.append(per_obs)

    def column(self, i: int, k: int) -> np.ndarray:
        """Field ``k`` (x, y, age, dist_tube, dist_true) of obstacle ``i``."""
        return np.array([row[i][k] for row in self.obstacles], dtype=np.float64)

    @property
    def path_length(self) -> float:
        pts = np.array(self.robot)
        if len(pts) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def min_distance_report(trace: Trace) -> list[dict]:
    """Per-obstacle minima of distance to tube and to the true obstacle."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    out = []
    for i in range(trace.n_obstacles):
        tube = trace.column(i, 3)
        true = trace.column(i, 4)
        out.append({
            "obstacle": i,
            "min_dist_tube": float(np.nanmin(tube)) if np.any(~np.isnan(tube)) else math.nan,
            "min_dist_true": float(np.nanmin(true)),
        })
    return out


def overall_minima(trace: Trace) -> tuple[float, float]:
    rep = min_distance_report(trace)
    if not rep:
        return math.inf, math.inf
    tube = [r["min_dist_tube"] for r in rep if not math.isnan(r["min_dist_tube"])]
    return (min(tube) if tube else math.nan), min(r["min_dist_true"] for r in rep)


def _escape(x_p, tube: ReachTube, t: float) -> np.ndarray:
    """Direction out of a tube the robot is already within delta of."""
    cp = undilated_closest(tube.slice(t), x_p)
    away = x_p - cp.point
    n = float(np.hypot(*away))
    if n == 0.0:
        away = x_p - tube.origin
        n = float(np.hypot(*away))
    if n == 0.0:
        return np.array([-math.sin(tube.heading), math.cos(tube.heading)]) * _ESCAPE_GAIN
    return away / n * _ESCAPE_GAIN


class _TubeController:
    """Exact reach-tube field; also the noise-free and point-obstacle variants."""

    def __init__(self, scenario: Scenario, kind: str):
        self.s = scenario
        self.kind = kind
        self.tubes: list[ReachTube | None] = [None] * len(scenario.obstacles)
        self.breaches = 0

    def on_reports(self, reports) -> None:
        for i, (spec, rep) in enumerate(zip(self.s.obstacles, reports)):
            if rep is None:
                continue
            bounds = spec.bounds if self.kind == EXACT_PF else NoiseBounds(0.0, 0.0)
            self.tubes[i] = forward_reach_tube(rep[0], bounds, self.s.horizon,
                                               spec.footprint.radius)

    def velocity(self, x_p, x_h, now) -> np.ndarray:
        g = self.s.gains
        u = -attractive_gradient(x_p, self.s.goal, g.k_p)
        for tube in self.tubes:
            t1 = min(now, tube.t_end)
            t2 = t1 if self.kind == POINT_PF else tube.t_end
            slc = tube.slice(t1, t2)
            cp = closest_point(slc, x_p)
            if cp.distance > g.delta:
                u = u - gradient_from_closest(x_p, cp, g.k_r, g.delta)
            else:
                self.breaches += 1
                u = u + _escape(x_p, tube, t1)
        return u


class _NNController:
    def __init__(self, scenario: Scenario, model: Mlp):
        self.s = scenario
        self.model = model
        self.reports = []
        self.breaches = 0

    def on_reports(self, reports) -> None:
        self.reports = list(reports)

    def velocity(self, x_p, x_h, now) -> np.ndarray:
        u = -attractive_gradient(x_p, self.s.goal, self.s.gains.k_p)
        for obs, receipt in self.reports:
            u = u - infer(self.model, x_p, x_h, obs, now - receipt)
        return u


def run(scenario: Scenario, controller: str, model: Mlp | None = None,
        seed: int | None = None) -> Trace:
    """Simulate one trial. Deterministic in (scenario, controller, model, seed)."""
    if controller not in ALL_CONTROLLERS:
        raise ValueError(f"unknown controller {controller!r}")
    if (controller == NN) != (model is not None):
        raise ValueError("a model is required for, and only for, the nn controller")
    s = scenario
    rng = np.random.default_rng(s.seed if seed is None else seed)
    n = len(s.obstacles)
    world = [o.initial for o in s.obstacles]
    channel = InfoChannel(s.broadcast_times(), n)
    ctrl = _NNController(s, model) if controller == NN else _TubeController(s, controller)
    # the monitor always measures against tubes built with the true noise bounds
    monitor: list[ReachTube | None] = [None] * n
    robot = RobotState(s.robot_start, s.robot_heading, 0.0)
    trace = Trace(n)
    delta = s.gains.delta
    n_steps = int(math.floor(s.time_budget / s.dt + 1e-9))

    for k in range(n_steps + 1):
        now = k * s.dt
        if channel.poll(now, world):
            ctrl.on_reports(channel.reports)
            for i, (spec, rep) in enumerate(zip(s.obstacles, channel.reports)):
                monitor[i] = forward_reach_tube(rep[0], spec.bounds, s.horizon,
                                                spec.footprint.radius)
        x_p = robot.position
        per_obs = []
        violated = False
        for i, obs in enumerate(world):
            rep = channel.reports[i]
            true_d = max(0.0, float(math.hypot(*(x_p - obs.position)))
                         - s.obstacles[i].footprint.radius)
            violated |= true_d < delta
            if rep is None:
                per_obs.append((obs.position[0], obs.position[1], math.nan, math.nan, true_d))
                continue
            tube = monitor[i]
            if now > tube.t_end:
                trace.horizon_expired = True
            tube_d = closest_point(tube.slice(min(now, tube.t_end)), x_p).distance
            per_obs.append((obs.position[0], obs.position[1], now - rep[1], tube_d, true_d))

        status = None
        if violated:
            status = SAFETY_VIOLATION
        elif math.hypot(*(x_p - s.goal)) <= s.goal_tolerance:
            status = GOAL_REACHED
        elif k == n_steps:
            status = TIMEOUT
        cmd = np.zeros(2)
        if status is None and all(r is not None for r in channel.reports):
            tic = time.perf_counter()
            try:
                cmd = make_command(ctrl.velocity(x_p, robot.heading, now), s.max_speed).velocity
            except OutOfDomainError as exc:
                status = OUT_OF_DOMAIN
                trace.message = str(exc)
            trace.iteration_seconds.append(time.perf_counter() - tic)
        trace.record(now, x_p, cmd, per_obs)
        if status is not None:
            trace.status = status
            break
        robot = step_robot(robot, Command(cmd), s.dt, s.max_speed)
        world = [step_obstacle(obs, sample_noise(spec.bounds, rng), s.dt)
                 for obs, spec in zip(world, s.obstacles)]
    trace.controller_breaches = ctrl.breaches
    return trace


# ---------------------------------------------------------------- scenarios

UUV_CHANNEL_WIDTH = 230.0
UUV_SHIP_LENGTH = 75.0
UUV_SHIP_WIDTH = 25.0
UUV_SHIP_GAP = 375.0
UUV_SHIP_SPEED = 5.0
UUV_SPEED_NOISE = 0.05
UUV_HEADING_NOISE = 0.01
UUV_MAX_SPEED = 2.5
UUV_DELTA = 5.0
UUV_HORIZON = 600.0
UUV_K_P = 5.0
UUV_K_R = 15000.0
UUV_APPROACH = 500.0
UUV_SHIPS_PER_LANE = 4


def build_uuv_scenario(variation_seed: int = 0, ships_per_lane: int = UUV_SHIPS_PER_LANE,
                       goal_margin: float = 50.0) -> Scenario:
    """Robot crossing a two-lane shipping channel.

    The channel occupies ``0 <= y <= 230``; lane one (y = 57.5) runs
    towards +x, lane two (y = 172.5) towards -x. The robot starts 500 m
    before the channel on the y axis and crosses to a waypoint
    ``goal_margin`` past the far edge. Each lane is a convoy of ships
    450 m apart (75 m hull plus 375 m gap); the time at which each
    convoy's last ship clears the crossing line is drawn from the seed.
    A single broadcast at t = 0 stands for the surfacing.
    """
    rng = np.random.default_rng([variation_seed, 2021])
    pitch = UUV_SHIP_LENGTH + UUV_SHIP_GAP
    bounds = NoiseBounds(UUV_SPEED_NOISE, UUV_HEADING_NOISE)
    hull = Footprint(UUV_SHIP_LENGTH, UUV_SHIP_WIDTH)
    clear_one = rng.uniform(100.0, 260.0)
    clear_two = rng.uniform(clear_one + 50.0, clear_one + 200.0)
    ships = []
    for lane, (y, heading, clear) in enumerate(((0.25 * UUV_CHANNEL_WIDTH, 0.0, clear_one),
                                                (0.75 * UUV_CHANNEL_WIDTH, math.pi, clear_two))):
        direction = math.cos(heading)
        rear = -direction * UUV_SHIP_SPEED * clear
        for j in range(ships_per_lane):
            x = rear + direction * j * pitch
            ships.append(ObstacleSpec(ObstacleState([x, y], heading, UUV_SHIP_SPEED, 0.0),
                                      bounds, hull))
    return Scenario(
        name=f"uuv-{variation_seed}",
        robot_start=[0.0, -UUV_APPROACH],
        goal=[0.0, UUV_CHANNEL_WIDTH + goal_margin],
        obstacles=ships,
        gains=Gains(UUV_K_P, UUV_K_R, UUV_DELTA),
        horizon=UUV_HORIZON,
        info_times=[0.0],
        max_speed=UUV_MAX_SPEED,
        dt=0.1,
        goal_tolerance=1.0,
        robot_heading=math.pi / 2,
        seed=variation_seed,
    )


UGV_GOAL = (2.5, 0.0)
UGV_SPEED = 0.5
UGV_DELTA = 0.51
UGV_HORIZON = 8.0
UGV_K_P = 5.0
UGV_K_R = 10.0
UGV_NOISE = NoiseBounds(0.025, 0.02)


def build_ugv_scenario(case: str = "crossing", seed: int = 0) -> Scenario:
    """Ground robot driving 2.5 m past two moving obstacles.

    ``crossing``: the obstacles cross the robot's path in opposite
    directions. ``parallel``: both move the same way. Obstacle radii are
    folded into the 0.51 m threshold, so footprints are zero.
    """
    if case == "crossing":
        starts = [((0.9, -1.3), math.pi / 2), ((1.7, 1.3), -math.pi / 2)]
    elif case == "parallel":
        starts = [((0.9, -1.3), math.pi / 2), ((1.7, -2.1), math.pi / 2)]
    else:
        raise ValueError(f"unknown UGV case {case!r}")
    obstacles = [ObstacleSpec(ObstacleState(p, h, UGV_SPEED, 0.0), UGV_NOISE)
                 for p, h in starts]
    return Scenario(
        name=f"ugv-{case}",
        robot_start=[0.0, 0.0],
        goal=list(UGV_GOAL),
        obstacles=obstacles,
        gains=Gains(UGV_K_P, UGV_K_R, UGV_DELTA),
        horizon=UGV_HORIZON,
        info_times=[0.0],
        max_speed=UGV_SPEED,
        dt=0.05,
        goal_tolerance=0.1,
        seed=seed,
    )


def build_headon_scenario(seed: int = 0) -> Scenario:
    """One obstacle crossing the straight line between robot and goal.

    A field that tracks the obstacle's current position gets dragged
    along the obstacle's direction of travel; the tube field sends the
    robot behind it.
    """
    obstacle = ObstacleSpec(ObstacleState([2.5, -1.2], math.pi / 2, 0.7, 0.0),
                            NoiseBounds(0.05, 0.02))
    return Scenario(
        name="headon",
        robot_start=[0.0, 0.0],
        goal=[10.0, 0.0],
        obstacles=[obstacle],
        gains=Gains(5.0, 10.0, 0.5),
        horizon=10.0,
        info_times=[0.0],
        max_speed=1.0,
        dt=0.05,
        goal_tolerance=0.1,
        seed=seed,
    )


def build_family(family: str, seed: int) -> Scenario:
    if family == "uuv":
        return build_uuv_scenario(seed)
    if family == "ugv-cross":
        return build_ugv_scenario("crossing", seed)
    if family == "ugv-parallel":
        return build_ugv_scenario("parallel", seed)
    if family == "headon":
        return build_headon_scenario(seed)
    raise ValueError(f"unknown scenario family {family!r}")


# ---------------------------------------------------------------- files


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "schema": SCENARIO_SCHEMA,
        "version": SCENARIO_VERSION,
        "name": s.name,
        "robot_start": s.robot_start.tolist(),
        "robot_heading": s.robot_heading,
        "goal": s.goal.tolist(),
        "goal_tolerance": s.goal_tolerance,
        "max_speed": s.max_speed,
        "obstacles": [{
            "position": o.initial.position.tolist(),
            "heading": o.initial.heading,
            "speed": o.initial.speed,
            "timestamp": o.initial.timestamp,
            "noise": asdict(o.bounds),
            "footprint": {"length": o.footprint.length, "width": o.footprint.width},
        } for o in s.obstacles],
        "info_times": list(s.info_times),
        "info_random": s.info_random,
        "dt": s.dt,
        "gains": asdict(s.gains),
        "horizon": s.horizon,
        "time_budget": s.time_budget,
        "seed": s.seed,
    }


def scenario_from_dict(d: dict) -> Scenario:
    if d.get("schema") != SCENARIO_SCHEMA:
        raise ValueError("schema: not a reachpf scenario")
    if d.get("version") != SCENARIO_VERSION:
        raise ValueError(f"version: unsupported scenario version {d.get('version')!r}")
    try:
        obstacles = [ObstacleSpec(
            ObstacleState(o["position"], float(o["heading"]), float(o["speed"]),
                          float(o.get("timestamp", 0.0))),
            NoiseBounds(**o.get("noise", {})),
            Footprint(**o.get("footprint", {})),
        ) for o in d["obstacles"]]
        return Scenario(
            name=d.get("name", "scenario"),
            robot_start=d["robot_start"],
            goal=d["goal"],
            obstacles=obstacles,
            gains=Gains(**d["gains"]),
            horizon=float(d["horizon"]),
            info_times=[float(t) for t in d.get("info_times", [0.0])],
            info_random=d.get("info_random"),
            max_speed=float(d.get("max_speed", DEFAULT_MAX_SPEED)),
            dt=float(d.get("dt", 0.1)),
            time_budget=d.get("time_budget"),
            goal_tolerance=float(d.get("goal_tolerance", 1.0)),
            robot_heading=float(d.get("robot_heading", 0.0)),
            seed=int(d.get("seed", 0)),
        )
    except KeyError as exc:
        raise ValueError(f"{exc.args[0]}: missing field") from None
    except TypeError as exc:
        raise ValueError(f"malformed scenario: {exc}") from None


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n", encoding="utf-8")


def load_scenario(path) -> Scenario:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"scenario: malformed JSON at byte {exc.pos}") from None
    return scenario_from_dict(d)


OBSTACLE_COLUMNS = ("x", "y", "age", "dist_tube", "dist_true")


def trace_header(n_obstacles: int) -> list[str]:
    cols = ["time", "robot_x", "robot_y", "cmd_x", "cmd_y"]
    for i in range(n_obstacles):
        cols += [f"obs{i}_{c}" for c in OBSTACLE_COLUMNS]
    return cols


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(trace.n_obstacles))
    for t, r, c, obs in zip(trace.times, trace.robot, trace.commands, trace.obstacles):
        row = [t, *r, *c]
        for o in obs:
            row += list(o)
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_trace(trace: Trace, path) -> None:
    Path(path).write_text(trace_to_csv(trace), encoding="utf-8")


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Parse a trace CSV into named float columns; checks the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n = (len(header) - 5) // len(OBSTACLE_COLUMNS)
    if header != trace_header(n):
        raise ValueError("trace header does not match the documented layout")
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    data = data.reshape(-1, len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def trace_summary(trace: Trace, controller: str = "") -> dict:
    tube, true = overall_minima(trace)
    it = trace.iteration_seconds
    return {
        "controller": controller,
        "status": trace.status,
        "steps": len(trace),
        "final_time": trace.times[-1] if trace.times else 0.0,
        "min_dist_tube": tube,
        "min_dist_true": true,
        "per_obstacle": min_distance_report(trace),
        "path_length": trace.path_length,
        "horizon_expired": trace.horizon_expired,
        "controller_breaches": trace.controller_breaches,
        "mean_iteration_s": float(np.mean(it)) if it else 0.0,
        "max_iteration_s": float(np.max(it)) if it else 0.0,
        "message": trace.message,
    }
