"""Standalone figure rendering: one subcommand per family.

Exit codes: 0 success, 1 anything wrong with flags or input files.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .figures import FigureSpec, render
from .io import FigureDataError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftfig", description="render drifteval CSVs into figures"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="family", required=True)

    def common(p):
        p.add_argument("-o", "--out", required=True, help="output image path")
        p.add_argument("--title", default="")
        p.add_argument("--dpi", type=int, default=150)

    p = sub.add_parser("drift", help="macro drift curves, one CI band per window")
    p.add_argument("--summary", required=True, help="summary.csv from a drift run")
    common(p)

    p = sub.add_parser("drift-by-class", help="per-class drift curves")
    p.add_argument("--summary", required=True, help="summary.csv from a drift run")
    common(p)

    p = sub.add_parser("diagnostics", help="2x2 corpus diagnostics panel")
    p.add_argument("--corpus-summary", required=True)
    p.add_argument("--similarity", required=True, help="similarity_display.csv")
    common(p)

    p = sub.add_parser("sentiment", help="legacy vs retrained weekly index")
    p.add_argument("--sentiment", required=True, help="sentiment.csv")
    common(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    if args.family in ("drift", "drift-by-class"):
        inputs = (args.summary,)
    elif args.family == "diagnostics":
        inputs = (args.corpus_summary, args.similarity)
    else:
        inputs = (args.sentiment,)
    try:
        spec = FigureSpec(
            family=args.family,
            inputs=inputs,
            output=args.out,
            title=args.title,
            dpi=args.dpi,
        )
        out = render(spec)
    except (FigureDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
