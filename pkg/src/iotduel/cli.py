"""Command-line entry point.

Verbs: generate, train, eval, plot, sweep, bench.  Exit codes are a stable
scripting contract: 0 success, 1 usage error, 2 validation error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import itertools
import json
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointMismatch
from .metrics import SchemaMismatch, moving_average
from .plots import render_charts
from .rewards import DomainError
from .scenario import (
    GeneratorParams,
    InvalidParams,
    ParseError,
    ValidationError,
    generate_synthetic,
    save_scenario,
    validate_graph,
)
from .trainer import RunConfig, run_evaluation, run_training

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_VALIDATION_ERRORS = (
    ParseError,
    ValidationError,
    InvalidParams,
    SchemaMismatch,
    CheckpointMismatch,
    DomainError,
    ValueError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage problems, not argparse's 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="iotduel", description=__doc__)
    parser.add_argument("--version", action="version", version=f"iotduel {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_gen = sub.add_parser("generate", help="generate a synthetic scenario file")
    p_gen.add_argument("--nodes", type=int, required=True)
    p_gen.add_argument("--chain", type=int, required=True)
    p_gen.add_argument("--branching", type=int, default=1)
    p_gen.add_argument("--prob-lo", type=float, default=1.0)
    p_gen.add_argument("--prob-hi", type=float, default=1.0)
    p_gen.add_argument("--critical-prob", type=float, default=0.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)

    p_train = sub.add_parser("train", help="train both seats and write metrics + checkpoints")
    _add_run_args(p_train)

    p_eval = sub.add_parser("eval", help="greedy rollouts from checkpoints or scripted seats")
    _add_run_args(p_eval)
    p_eval.add_argument("--checkpoint-attack")
    p_eval.add_argument("--checkpoint-defense")

    p_plot = sub.add_parser("plot", help="render the metric charts as SVG files")
    p_plot.add_argument("--metrics", required=True)
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--window", type=int, default=10)

    p_sweep = sub.add_parser("sweep", help="enumerate a hyperparameter grid of runs")
    p_sweep.add_argument("--grid", required=True, help="JSON file: {param: [values, ...]}")
    p_sweep.add_argument("--config", help="base config JSON")
    p_sweep.add_argument("--scenario")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--jobs", type=int, default=1)

    p_bench = sub.add_parser("bench", help="compare the kernel backends")
    p_bench.add_argument("--repeats", type=int, default=5)
    return parser


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config JSON file")
    p.add_argument("--scenario", help="scenario file path (overrides config)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--attack-policy")
    p.add_argument("--defense-policy")
    p.add_argument("--out", help="output directory")


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise _UsageError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file is not valid JSON: {exc}") from exc
    overrides = {
        "scenario": args.scenario,
        "episodes": args.episodes,
        "horizon": args.horizon,
        "seed": args.seed,
        "attack_policy": getattr(args, "attack_policy", None),
        "defense_policy": getattr(args, "defense_policy", None),
    }
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if not data.get("scenario") and not data.get("generator"):
        raise _UsageError("a scenario path is required (--scenario or config file)")
    config = RunConfig.from_dict(data)
    config.validate()
    return config


def _cmd_generate(args) -> int:
    params = GeneratorParams(
        n_conditions=args.nodes,
        chain_length=args.chain,
        branching=args.branching,
        success_prob_range=(args.prob_lo, args.prob_hi),
        critical_prob=args.critical_prob,
        seed=args.seed,
    )
    graph = generate_synthetic(params)
    report = validate_graph(graph)
    save_scenario(graph, args.out, metadata={"seed": args.seed, "params": dataclasses.asdict(params)})
    print(f"wrote {args.out}: {graph.n_conditions} conditions, "
          f"{len(graph.exploits)} exploits, chain length {len(graph.chain)}")
    print(f"validation: {report}")
    return EXIT_OK


def _print_summary(log) -> None:
    rewards_a = [r.attack_reward_total for r in log.rows]
    rewards_d = [r.defense_reward_total for r in log.rows]
    window = min(10, len(log.rows))
    print(f"episodes: {len(log.rows)}")
    print(f"final attack reward (ma{window}): {moving_average(rewards_a, window)[-1]:.3f}")
    print(f"final defense reward (ma{window}): {moving_average(rewards_d, window)[-1]:.3f}")
    for terminal, count in sorted(Counter(r.terminal for r in log.rows).items()):
        print(f"terminal {terminal}: {count}")


def _cmd_train(args) -> int:
    config = _load_run_config(args)
    print("effective config: " + json.dumps(config.to_dict(), sort_keys=True))
    log = run_training(config, out_dir=args.out)
    _print_summary(log)
    if args.out:
        print(f"outputs in {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = _load_run_config(args)
    print("effective config: " + json.dumps(config.to_dict(), sort_keys=True))
    log = run_evaluation(
        config,
        checkpoint_attack=args.checkpoint_attack,
        checkpoint_defense=args.checkpoint_defense,
        out_dir=args.out,
    )
    _print_summary(log)
    return EXIT_OK


def _cmd_plot(args) -> int:
    written = render_charts(args.metrics, args.out, ma_window=args.window)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _sweep_cell(payload: tuple[dict, dict, str]) -> tuple[str, str | None]:
    base, cell, out_dir = payload
    merged = dict(base)
    merged.update(cell)
    try:
        config = RunConfig.from_dict(merged)
        config.validate()
        run_training(config, out_dir=out_dir)
        return out_dir, None
    except Exception as exc:  # keep other cells running; report at the end
        return out_dir, f"{type(exc).__name__}: {exc}"


def _cmd_sweep(args) -> int:
    try:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _UsageError(f"cannot read grid file: {exc}") from exc
    if not isinstance(grid, dict) or not grid:
        raise _UsageError("grid must be a non-empty JSON object of {param: [values]}")
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise _UsageError(f"grid entry {key!r} must be a non-empty list")

    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.scenario:
        base["scenario"] = args.scenario
    if not base.get("scenario") and not base.get("generator"):
        raise _UsageError("sweep needs a scenario (--scenario or base config)")

    keys = sorted(grid)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    payloads = []
    for cell in cells:
        cell_name = "_".join(f"{k}={cell[k]}" for k in keys)
        payloads.append((base, cell, str(out_root / cell_name)))

    failures = []
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_cell, payloads))
    else:
        results = [_sweep_cell(p) for p in payloads]
    for out_dir, error in results:
        if error:
            failures.append((out_dir, error))
            print(f"FAILED {out_dir}: {error}", file=sys.stderr)
        else:
            print(f"completed {out_dir}")
    if failures:
        print(f"{len(failures)}/{len(cells)} cells failed", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"all {len(cells)} cells completed")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .bench import format_benchmark, run_benchmark

    rows = run_benchmark(repeats=args.repeats)
    print(format_benchmark(rows))
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
    "sweep": _cmd_sweep,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.verb](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
