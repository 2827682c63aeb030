"""CLI: render bench CSVs to figures."""

from __future__ import annotations

import argparse
import sys

from .figures import SUITE_X_COLUMN, default_spec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bouquetmc-plots",
        description="Render bouquetmc bench CSVs to static figures.")
    sub = parser.add_subparsers(dest="command", required=True)

    rend = sub.add_parser("render", help="render one suite CSV to an image")
    rend.add_argument("--csv", required=True, help="bench CSV file")
    rend.add_argument("--suite", required=True,
                      help=f"one of: {', '.join(sorted(SUITE_X_COLUMN))}")
    rend.add_argument("--out", required=True, help="output directory")
    rend.add_argument("--metric", default="wall_ms",
                      help="y metric: wall_ms, abs_error, or fetches")
    rend.set_defaults(func=cmd_render)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def cmd_render(args) -> int:
    spec = default_spec(args.suite, args.out, y_metric=args.metric)
    path = render(args.csv, spec)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
