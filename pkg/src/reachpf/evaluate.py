"""Batch trials, minima tables and the NN-vs-rebuild timing benchmark."""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sim
from .nn import Mlp, load_model, nn_velocity
from .potential import attractive_gradient, gradient_from_closest
from .reachability import Flowpipe


@dataclass
class TrialResult:
    controller: str
    trial: int
    seed: int
    status: str
    min_dist_tube: float = math.nan
    min_dist_true: float = math.nan
    path_length: float = math.nan
    final_time: float = math.nan
    mean_iteration_s: float = math.nan
    max_iteration_s: float = math.nan
    trace_file: str = ""
    error: str = ""


@dataclass
class EvalSummary:
    family: str
    trials: int
    results: list[TrialResult] = field(default_factory=list)
    benchmark: dict | None = None
    delta: float = math.inf

    def for_controller(self, controller: str) -> list[TrialResult]:
        return [r for r in self.results if r.controller == controller]

    def stats(self) -> dict:
        out = {}
        for ctrl in dict.fromkeys(r.controller for r in self.results):
            rows = self.for_controller(ctrl)
            delta_hits = [r for r in rows if r.min_dist_tube < self.delta]
            tube = [r.min_dist_tube for r in rows if math.isfinite(r.min_dist_tube)]
            it = [r.mean_iteration_s for r in rows if math.isfinite(r.mean_iteration_s)]
            mx = [r.max_iteration_s for r in rows if math.isfinite(r.max_iteration_s)]
            out[ctrl] = {
                "trials": len(rows),
                "goal_reached": sum(r.status == sim.GOAL_REACHED for r in rows),
                "safety_violations": sum(r.status == sim.SAFETY_VIOLATION for r in rows),
                "tube_margin_violations": len(delta_hits),
                "errors": sum(bool(r.error) for r in rows),
                "min_dist_tube": min(tube) if tube else math.nan,
                "mean_iteration_s": float(np.mean(it)) if it else math.nan,
                "max_iteration_s": float(np.max(mx)) if mx else math.nan,
            }
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "trials": self.trials,
            "delta": self.delta,
            "controllers": self.stats(),
            "benchmark": self.benchmark,
            "results": [vars(r) for r in self.results],
        }


def _trial(args) -> TrialResult:
    family, controller, trial, seed, model_path, out_dir = args
    res = TrialResult(controller, trial, seed, "error")
    try:
        scenario = sim.build_family(family, seed)
        model = load_model(model_path) if controller == sim.NN else None
        trace = sim.run(scenario, controller, model, seed=seed)
        summary = sim.trace_summary(trace, controller)
        res.status = trace.status
        res.min_dist_tube = summary["min_dist_tube"]
        res.min_dist_true = summary["min_dist_true"]
        res.path_length = summary["path_length"]
        res.final_time = summary["final_time"]
        res.mean_iteration_s = summary["mean_iteration_s"]
        res.max_iteration_s = summary["max_iteration_s"]
        if out_dir is not None:
            name = f"trace_{controller}_{trial:03d}.csv"
            sim.write_trace(trace, Path(out_dir) / name)
            res.trace_file = name
    except Exception as exc:  # noqa: BLE001 - recorded per trial
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def run_trials(family: str, controllers: list[str], trials: int, seed: int,
               model_path=None, out_dir=None, jobs: int = 1) -> EvalSummary:
    """Run ``trials`` seeds (``seed, seed+1, ...``) for every controller."""
    tasks = [(family, ctrl, i, seed + i, None if model_path is None else str(model_path),
              None if out_dir is None else str(out_dir))
             for ctrl in controllers for i in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial, tasks))
    else:
        results = [_trial(t) for t in tasks]
    results.sort(key=lambda r: (controllers.index(r.controller), r.trial))
    summary = EvalSummary(family, trials, results)
    summary.delta = sim.build_family(family, seed).gains.delta
    return summary


def write_minima_table(summary: EvalSummary, path) -> None:
    """One row per trial per controller, ready for plotting."""
    cols = ["controller", "trial", "seed", "status", "min_dist_tube", "min_dist_true",
            "margin_above_delta", "path_length", "final_time", "mean_iteration_s", "error"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in summary.results:
            w.writerow([r.controller, r.trial, r.seed, r.status, repr(r.min_dist_tube),
                        repr(r.min_dist_true), repr(r.min_dist_tube - summary.delta),
                        repr(r.path_length), repr(r.final_time), repr(r.mean_iteration_s),
                        r.error])


def read_minima_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("min_dist_tube", "min_dist_true", "margin_above_delta", "path_length",
                    "final_time", "mean_iteration_s"):
            row[key] = float(row[key])
        row["trial"] = int(row["trial"])
        row["seed"] = int(row["seed"])
    return rows


def write_summary(summary: EvalSummary, path) -> None:
    Path(path).write_text(json.dumps(summary.to_dict(), indent=2, default=float) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------- timing


def benchmark_inputs(scenario: sim.Scenario, trace: sim.Trace, n: int,
                     rng: np.random.Generator) -> list[tuple]:
    """``n`` single-obstacle control inputs replayed from a trace.

    Each input is (robot position, robot heading, report, receipt, now)
    for one obstacle at one recorded step.
    """
    if scenario.broadcast_times()[:1] != [0.0]:
        raise ValueError("benchmark replay needs a broadcast at t = 0")
    reports = [(o.initial, 0.0) for o in scenario.obstacles]
    out = []
    steps = rng.integers(0, len(trace), size=n)
    which = rng.integers(0, len(reports), size=n)
    for k, i in zip(steps, which):
        now = trace.times[k]
        if now > scenario.horizon:
            now = scenario.horizon
        x_p = np.array(trace.robot[k])
        cmd = trace.commands[k]
        heading = math.atan2(cmd[1], cmd[0]) if cmd != (0.0, 0.0) else scenario.robot_heading
        out.append((x_p, heading, reports[i][0], reports[i][1], now, i))
    return out


def time_nn(model: Mlp, scenario: sim.Scenario, inputs) -> np.ndarray:
    """Seconds per single-obstacle NN control iteration."""
    out = np.empty(len(inputs))
    for j, (x_p, x_h, obs, receipt, now, _) in enumerate(inputs):
        tic = time.perf_counter()
        nn_velocity(model, x_p, x_h, scenario.goal, [(obs, receipt)], now, scenario.gains)
        out[j] = time.perf_counter() - tic
    return out


def time_rebuild(scenario: sim.Scenario, inputs, step: float = 0.1) -> np.ndarray:
    """Seconds per single-obstacle iteration that rebuilds the tube from scratch."""
    g = scenario.gains
    out = np.empty(len(inputs))
    for j, (x_p, _, obs, _, now, i) in enumerate(inputs):
        spec = scenario.obstacles[i]
        tic = time.perf_counter()
        pipe = Flowpipe(obs, spec.bounds, scenario.horizon, spec.footprint.radius, step)
        cp = pipe.closest_point(x_p, now)
        u = -attractive_gradient(x_p, scenario.goal, g.k_p)
        if cp.distance > g.delta:
            u = u - gradient_from_closest(x_p, cp, g.k_r, g.delta)
        out[j] = time.perf_counter() - tic
    return out


def speedup_benchmark(model: Mlp, scenario: sim.Scenario, trace: sim.Trace,
                      n_nn: int = 10_000, n_rebuild: int = 10_000, seed: int = 0) -> dict:
    """Mean NN iteration time vs mean tube-rebuild-plus-query time.

    Both sides see inputs replayed from ``trace``; the rebuild side uses
    the first ``n_rebuild`` of the NN inputs.
    """
    rng = np.random.default_rng(seed)
    inputs = benchmark_inputs(scenario, trace, max(n_nn, n_rebuild), rng)
    nn_t = time_nn(model, scenario, inputs[:n_nn])
    rb_t = time_rebuild(scenario, inputs[:n_rebuild])
    return {
        "nn_iterations": int(len(nn_t)),
        "rebuild_iterations": int(len(rb_t)),
        "nn_mean_s": float(nn_t.mean()),
        "nn_max_s": float(nn_t.max()),
        "rebuild_mean_s": float(rb_t.mean()),
        "rebuild_max_s": float(rb_t.max()),
        "speedup": float(rb_t.mean() / nn_t.mean()),
    }
