"""Script entry: render a figure from a CSV product.

Usage::

    proxvr-plot convergence TRAJECTORY_CSV OUT_IMAGE
    proxvr-plot scatter RATES_CSV OUT_IMAGE

Exit codes: 0 on success, 1 on schema/data errors (no output file is
written), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys

from proxvr_plots.csvio import SchemaError
from proxvr_plots.figures import plot_convergence, plot_rate_scatter

__all__ = ["main", "entry"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxvr-plot",
        description="Render convergence and rate-comparison figures from CSV.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    conv = sub.add_parser("convergence", help="semilog convergence curve with fit")
    conv.add_argument("input", help="trajectory CSV (k,mean_sq_dist)")
    conv.add_argument("output", help="image file to write")
    scat = sub.add_parser("scatter", help="empirical vs theoretical rate scatter")
    scat.add_argument("input", help="rates CSV")
    scat.add_argument("output", help="image file to write")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.kind == "convergence":
            plot_convergence(args.input, args.output)
        else:
            plot_rate_scatter(args.input, args.output)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
