"""stoprl-plot: render stoprl CSVs into figures.

Exits 0 on success, 2 on a schema mismatch (the offending column or cell
is named on stderr).
"""

from __future__ import annotations

import argparse
import sys

from .render import (
    SchemaError,
    render_box,
    render_curves,
    render_noise,
    render_positions,
    render_quadrants,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stoprl-plot")
    sub = parser.add_subparsers(dest="kind", required=True)

    def multi(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="CSV")
        p.add_argument("--labels", nargs="+", help="one label per input (default: run dir name)")
        p.add_argument("--out", required=True, metavar="PNG")
        return p

    multi("curves", "learning curves with cross-run std bands")
    multi("quadrants", "stacked-area buffer composition over time")
    multi("noise", "exploration noise and early-stop rate traces")

    pos = sub.add_parser("positions", help="final-position heatmap from a grid CSV")
    pos.add_argument("--in", dest="inputs", nargs=1, required=True, metavar="CSV")
    pos.add_argument("--out", required=True, metavar="PNG")

    box = sub.add_parser("box", help="box plot of per-seed final scores")
    box.add_argument("--in", dest="inputs", nargs=1, required=True, metavar="CSV")
    box.add_argument("--out", required=True, metavar="PNG")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "curves":
            render_curves(args.inputs, args.out, args.labels)
        elif args.kind == "quadrants":
            render_quadrants(args.inputs, args.out, args.labels)
        elif args.kind == "noise":
            render_noise(args.inputs, args.out, args.labels)
        elif args.kind == "positions":
            render_positions(args.inputs[0], args.out)
        elif args.kind == "box":
            render_box(args.inputs[0], args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing input: {exc.filename}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
