"""Command line: ``plotkit render DIR NAME`` (or ``NAME=all``)."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .figures import FIGURES, SchemaError, render


def run(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="Render parakpz verification figures from report "
                    "directories.")
    parser.add_argument("--version", action="version",
                        version=f"plotkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render a named figure")
    p.add_argument("report_dir", help="directory written by the parakpz CLI")
    p.add_argument("figure", help="figure name, or 'all'")
    p.add_argument("--out", default=None,
                   help="output image path (single figure only)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0

    names = sorted(FIGURES) if args.figure == "all" else [args.figure]
    if args.out and len(names) > 1:
        print("plotkit: error: --out requires a single figure name",
              file=sys.stderr)
        return 1
    for name in names:
        try:
            path = render(args.report_dir, name,
                          args.out if args.out else None)
        except KeyError:
            print(f"plotkit: error: unknown figure {name!r}; available: "
                  f"{', '.join(sorted(FIGURES))}", file=sys.stderr)
            return 1
        except (FileNotFoundError, SchemaError) as exc:
            print(f"plotkit: error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {path}")
    return 0


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
