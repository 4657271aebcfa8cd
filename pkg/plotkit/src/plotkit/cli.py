"""Command-line front end: plotkit <kind> --in a.csv [b.csv ...] --out fig.svg.

Exit code 0 on success, 1 on missing files, bad schemas, or unwritable
output.  Axis scales default per kind and can be overridden.
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="Render benchmark CSVs as figures (SVG or PNG).",
    )
    parser.add_argument("kind", choices=KINDS, help="figure kind")
    parser.add_argument(
        "--in",
        dest="inputs",
        nargs="+",
        required=True,
        metavar="CSV",
        help="input CSV file(s); one curve or curve family per file",
    )
    parser.add_argument("--out", required=True, help="output image path (.svg or .png)")
    parser.add_argument("--xscale", choices=("linear", "log"))
    parser.add_argument("--yscale", choices=("linear", "log"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(
            PlotSpec(args.kind, args.inputs, args.out, args.xscale, args.yscale)
        )
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
