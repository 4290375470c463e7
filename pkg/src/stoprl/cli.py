"""Command-line entry points: run / compare / positions."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import ExperimentConfig
from .harness import (
    compare_runs,
    comparison_table,
    position_histogram,
    read_run,
    run_seeds,
    write_comparison,
    write_position_grid,
)


def parse_seeds(spec: str) -> list[int]:
    """'0..4' (inclusive range) or '0,2,5' or a single integer."""
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in spec.split(",") if tok]


def load_run_dirs(root: str):
    path = Path(root)
    if (path / "summary.json").exists():
        return [read_run(str(path))]
    runs = sorted(p for p in path.iterdir() if (p / "summary.json").exists())
    if not runs:
        raise SystemExit(f"no run directories under {root}")
    return [read_run(str(p)) for p in runs]


def cmd_run(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
    else:
        config = ExperimentConfig(maze=args.maze or "medium", mode=args.mode or "least")
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.maze:
        overrides["maze"] = args.maze
        overrides.setdefault("total_steps", None)
    if args.total_steps is not None:
        overrides["total_steps"] = args.total_steps
    if overrides:
        config = config.with_overrides(**overrides)
    seeds = parse_seeds(args.seeds)
    started = time.perf_counter()
    out_dirs = run_seeds(config, seeds, args.out, workers=args.workers)
    elapsed = time.perf_counter() - started
    print(f"{config.mode} on {config.maze}: {len(seeds)} seed(s), "
          f"{config.total_steps} steps each, {elapsed:.1f}s")
    for d in out_dirs:
        print(f"  {d}")
    return 0


def cmd_compare(args) -> int:
    vanilla = load_run_dirs(args.vanilla)
    least = load_run_dirs(args.least)
    summary = compare_runs(vanilla, least)
    print(comparison_table(summary))
    if args.out:
        write_comparison(summary, vanilla, least, args.out)
        print(f"written: {args.out}/comparison.json, comparison.csv, final_scores.csv")
    return 0


def cmd_positions(args) -> int:
    records = load_run_dirs(args.runs)
    counts = position_histogram(records, last_n=args.last)
    write_position_grid(counts, args.out)
    print(f"{counts.sum()} final positions binned -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stoprl",
        description="TD3 maze runs with adaptive early episode termination",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one arm over a seed list")
    run.add_argument("--config", help="JSON config file (defaults when omitted)")
    run.add_argument("--mode", choices=("vanilla", "least"))
    run.add_argument("--maze", choices=("small", "medium", "large"))
    run.add_argument("--total-steps", type=int, dest="total_steps")
    run.add_argument("--seeds", default="0", help="e.g. 0..4 or 0,1,2")
    run.add_argument("--out", required=True, help="output root directory")
    run.add_argument("--workers", type=int, default=None)
    run.set_defaults(func=cmd_run)

    comp = sub.add_parser("compare", help="summarize vanilla vs stop-enabled arms")
    comp.add_argument("--vanilla", required=True, help="run dir or dir of run dirs")
    comp.add_argument("--least", required=True)
    comp.add_argument("--out", help="where to write comparison files")
    comp.set_defaults(func=cmd_compare)

    pos = sub.add_parser("positions", help="final-position histogram over layout cells")
    pos.add_argument("--runs", required=True, help="run dir or dir of run dirs")
    pos.add_argument("--out", required=True, help="grid CSV path")
    pos.add_argument("--last", type=int, default=50, help="episodes per run to count")
    pos.set_defaults(func=cmd_positions)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
