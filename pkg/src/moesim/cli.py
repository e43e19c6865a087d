"""Command-line entry points.

Exit codes: 0 success, 2 config error, 3 invariant failure, 4 every row
of a run reported OOM.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .core import model_stats
from .errors import ConfigError, InvariantError, MoESimError
from .harness import parse_config, run_experiment, sweep
from .presets import BYTE_SCALE, DIM_SCALE, SCALED_FAST_CAPACITY, get_preset
from .scheduler import Strategy
from .wallclock import run_wallclock

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_OOM = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moesim",
        description="Desk-scale MoE offload inference simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None, help="output directory for CSVs")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--include-first-block", action="store_true")
    run_p.add_argument("--wallclock", action="store_true",
                       help="also replay each row with two real workers")
    run_p.add_argument("--timelines", action="store_true",
                       help="write one JSONL timeline per row")

    stats_p = sub.add_parser("stats", help="print closed-form model stats")
    stats_p.add_argument("--preset", required=True)

    sweep_p = sub.add_parser("sweep", help="run a sweep over one axis")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", required=True)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated sweep values")
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--seed", type=int, default=None)
    return parser


def _finish(exp, report, out_override) -> int:
    out_dir = Path(out_override) if out_override else Path(exp.out_dir)
    paths = report.write(out_dir)
    for path in paths:
        print(f"wrote {path}")
    if report.all_oom:
        print("every row reported OOM")
        return EXIT_OOM
    return EXIT_OK


def _cmd_run(args) -> int:
    exp = parse_config(args.config)
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    if args.include_first_block:
        exp = replace(exp, include_first_block=True)
    report = run_experiment(exp)
    if args.wallclock or args.timelines:
        _extras(exp, args)
    return _finish(exp, report, args.out)


def _extras(exp, args) -> None:
    """Optional per-row wallclock replay / timeline export (non-CSV)."""
    from .core import gen_routing_trace, init_model
    from .scheduler import simulate

    cost = exp.cost_model()
    out_dir = Path(args.out) if args.out else Path(exp.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for label in exp.models:
        cfg = exp.model_config(label)
        tier = exp.tier_for(label)
        params = init_model(cfg)
        trace = (gen_routing_trace(cfg, exp.iterations, exp.trace_skew,
                                   exp.seed)
                 if exp.trace == "synthetic" else None)
        for strategy in exp.strategies:
            try:
                if args.wallclock:
                    wall = run_wallclock(params, strategy, cost, tier,
                                         iterations=exp.iterations,
                                         trace=trace)
                    print(f"wallclock {label}/{strategy.value}: "
                          f"{wall.wall_total_s:.6f} s wall vs "
                          f"{wall.virtual.metrics.total_time_s:.6f} s virtual")
                    sim = wall.virtual
                else:
                    sim = simulate(params, strategy, cost, tier,
                                   iterations=exp.iterations, trace=trace)
            except MoESimError as exc:
                print(f"skipping {label}/{strategy.value}: {exc}")
                continue
            if args.timelines:
                path = out_dir / f"timeline_{label}_{strategy.value}.jsonl"
                sim.timeline.save_jsonl(path)
                print(f"wrote {path}")


def _cmd_stats(args) -> int:
    preset = get_preset(args.preset)
    full = model_stats(preset.full_config())
    scaled = model_stats(preset.scaled_config())
    print(f"preset {preset.name} (dims scaled down {DIM_SCALE}x for "
          f"simulation; bytes/flops by {BYTE_SCALE}x)")
    for title, stats in (("full-size", full), ("scaled", scaled)):
        print(f"[{title}]")
        print(f"  params_total         = {stats.params_total}")
        print(f"  params_moe           = {stats.params_moe}")
        print(f"  params_experts       = {stats.params_experts}")
        print(f"  params_non_moe       = {stats.params_non_moe}")
        print(f"  flops_per_token      = {stats.flops_per_token}")
        print(f"  gate_flops_per_token = {stats.gate_flops_per_token}")
        print(f"  bytes_total          = {stats.bytes_total}")
        print(f"  bytes_experts        = {stats.bytes_experts}")
    print(f"default scaled fast-tier capacity = {SCALED_FAST_CAPACITY} bytes")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    exp = parse_config(args.config)
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    values = tuple(tok.strip() for tok in args.values.split(",") if tok.strip())
    report = sweep(exp, axis=args.axis, values=values)
    return _finish(exp, report, args.out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "stats":
            return _cmd_stats(args)
        return _cmd_sweep(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
