"""plotview command line: render figures from randnls study outputs."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, render, render_all


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotview", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    all_cmd = sub.add_parser("render", help="render every study listed in a manifest")
    all_cmd.add_argument("--manifest", required=True)
    all_cmd.add_argument("--out", required=True, help="output directory for figures + index")
    one = sub.add_parser("render-one", help="render a single CSV")
    one.add_argument("--csv", required=True)
    one.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    one.add_argument("--manifest", default=None)
    one.add_argument("--figure", required=True, help="output image path")
    return parser


def main(argv: list[str] | None = None) -> None:
    args = _build_parser().parse_args(argv)
    if args.command == "render-one":
        try:
            info = render(FigureSpec(args.csv, args.manifest, args.kind, args.figure))
        except Exception as exc:  # noqa: BLE001
            print(f"error: {exc}", file=sys.stderr)
            sys.exit(1)
        print(f"wrote {args.figure} ({info['points']} rows)")
        sys.exit(0)
    result = render_all(args.manifest, args.out)
    for item in result["rendered"]:
        print(f"wrote {item['figure']} ({item['kind']})")
    for item in result["failures"]:
        print(f"failed {item['kind']} ({item['csv']}): {item['error']}", file=sys.stderr)
    sys.exit(1 if result["failures"] else 0)


if __name__ == "__main__":
    main()
