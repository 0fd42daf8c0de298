"""Command-line entry point: ``reachpf <command> ...``.

Exit codes: 0 success, 2 usage error, 3 unreadable or malformed input
file, 4 training diverged, 5 out-of-domain network query.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluate, nn, presets, sim
from .errors import ModelFormatError, OutOfDomainError, TrainingDiverged

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_DOMAIN = 5

log = logging.getLogger("reachpf")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _read_json(path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{what}: no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{what}: malformed JSON at byte {exc.pos}") from None


def cmd_gen_data(args) -> int:
    try:
        spec = nn.GridSpec.from_dict(_read_json(args.spec, "grid spec"))
    except ValueError as exc:
        raise UsageError(f"grid spec field {exc}") from None
    ds = nn.generate_training_data(spec)
    nn.write_dataset(ds, args.out)
    report = {"grid_points": spec.size, "samples": len(ds),
              "excluded_inside": ds.excluded_inside, "excluded_cap": ds.excluded_cap}
    if len(ds) == 0:
        print("warning: every grid point was excluded; dataset is empty", file=sys.stderr)
    print(json.dumps(report))
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        ds = nn.read_dataset(args.data)
    except FileNotFoundError:
        raise DataError(f"dataset: no such file {args.data}") from None
    except ModelFormatError as exc:
        raise DataError(f"dataset: {exc}") from None
    cfg_dict = _read_json(args.config, "train config") if args.config else {}
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    if args.epochs is not None:
        cfg_dict["epochs"] = args.epochs
    try:
        cfg = nn.TrainConfig.from_dict(cfg_dict)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"train config field {exc}") from None
    if len(ds) == 0:
        raise DataError("dataset is empty")
    res = nn.fit(ds, cfg, log=lambda e, a, b: log.info("epoch %d train %.6g val %.6g", e, a, b))
    nn.save_model(res.mlp, args.out)
    loss_path = Path(args.loss_log) if args.loss_log else Path(args.out).with_suffix(".loss.csv")
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, tr, va in res.history:
            w.writerow([epoch, repr(tr), repr(va)])
    print(json.dumps({"samples": len(ds), "validation": int(len(res.val_index)),
                      "final_val_mse": res.val_mse, "model": str(args.out),
                      "loss_log": str(loss_path)}))
    return EXIT_OK


def _load_scenario(args) -> sim.Scenario:
    try:
        s = sim.load_scenario(args.scenario)
    except FileNotFoundError:
        raise DataError(f"scenario: no such file {args.scenario}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if args.seed is not None:
        s.seed = args.seed
    return s


def _load_model(path):
    try:
        return nn.load_model(path)
    except FileNotFoundError:
        raise DataError(f"model: no such file {path}") from None
    except ModelFormatError as exc:
        raise DataError(f"model: {exc}") from None


def cmd_simulate(args) -> int:
    if args.controller == sim.NN and not args.model:
        raise UsageError("--model is required with --controller nn")
    scenario = _load_scenario(args)
    model = _load_model(args.model) if args.controller == sim.NN else None
    trace = sim.run(scenario, args.controller, model)
    sim.write_trace(trace, args.out)
    summary = sim.trace_summary(trace, args.controller)
    summary_path = Path(args.summary) if args.summary else Path(args.out).with_suffix(".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"status={summary['status']} min_dist_tube={summary['min_dist_tube']:.3f} "
          f"min_dist_true={summary['min_dist_true']:.3f} "
          f"path_length={summary['path_length']:.2f}")
    if trace.status == sim.OUT_OF_DOMAIN:
        print(f"error: {trace.message}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_evaluate(args) -> int:
    controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
    for c in controllers:
        if c not in sim.ALL_CONTROLLERS:
            raise UsageError(f"--controllers: unknown controller {c!r}")
    if sim.NN in controllers and not args.model:
        raise UsageError("--model is required when evaluating the nn controller")
    if args.model:
        _load_model(args.model)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = evaluate.run_trials(args.family, controllers, args.trials, args.seed,
                                  args.model, out, args.jobs)
    if sim.NN in controllers and args.bench_iterations > 0:
        first = next((r for r in summary.for_controller(sim.NN) if r.trace_file), None)
        if first is not None:
            scenario = sim.build_family(args.family, first.seed)
            trace = sim.run(scenario, sim.NN, _load_model(args.model), seed=first.seed)
            summary.benchmark = evaluate.speedup_benchmark(
                _load_model(args.model), scenario, trace, args.bench_iterations,
                args.bench_rebuild_iterations or args.bench_iterations, seed=args.seed)
    evaluate.write_minima_table(summary, out / "minima.csv")
    evaluate.write_summary(summary, out / "summary.json")
    for ctrl, st in summary.stats().items():
        print(f"{ctrl}: goal {st['goal_reached']}/{st['trials']} "
              f"violations {st['safety_violations']} "
              f"tube<delta {st['tube_margin_violations']} "
              f"min_dist_tube {st['min_dist_tube']:.3f} errors {st['errors']}")
    if summary.benchmark:
        b = summary.benchmark
        print(f"benchmark: nn {b['nn_mean_s'] * 1e6:.1f} us, rebuild "
              f"{b['rebuild_mean_s'] * 1e3:.2f} ms, speedup {b['speedup']:.0f}x")
    return EXIT_OK


def cmd_scenario(args) -> int:
    sim.save_scenario(sim.build_family(args.family, args.seed), args.out)
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.kind == "train-config":
        d = vars(presets.train_config())
    else:
        d = presets.GRIDS[args.kind](args.scale).to_dict()
    Path(args.out).write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reachpf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a labelled training grid")
    g.add_argument("--spec", required=True, help="grid spec JSON")
    g.add_argument("--out", required=True, help="dataset file to write")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the repulsive-gradient network")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="train config JSON (defaults apply if omitted)")
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--loss-log", help="loss CSV (default: <out>.loss.csv)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="run one trial")
    s.add_argument("--scenario", required=True)
    s.add_argument("--controller", required=True, choices=sim.ALL_CONTROLLERS)
    s.add_argument("--model")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="trace CSV to write")
    s.add_argument("--summary", help="summary JSON (default: <out stem>.summary.json)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="run a batch of trials")
    e.add_argument("--family", required=True, choices=["uuv", "ugv-cross", "ugv-parallel",
                                                       "headon"])
    e.add_argument("--controllers", default="exact-pf",
                   help="comma-separated list of nn, exact-pf, noise-free-pf, point-pf")
    e.add_argument("--trials", type=int, default=20)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--model")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--bench-iterations", type=int, default=0,
                   help="NN timing iterations for the speedup benchmark (0 disables)")
    e.add_argument("--bench-rebuild-iterations", type=int, default=0,
                   help="tube-rebuild timing iterations (default: same as NN)")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("scenario", help="write a built-in scenario to a file")
    c.add_argument("--family", required=True, choices=["uuv", "ugv-cross", "ugv-parallel",
                                                       "headon"])
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_scenario)

    r = sub.add_parser("preset", help="write a built-in grid spec or train config")
    r.add_argument("--kind", required=True, choices=["uuv", "ugv", "train-config"])
    r.add_argument("--scale", type=float, default=1.0, help="grid resolution multiplier")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OutOfDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
