"""figures --episode <csv> --out <dir> [--only id]"""

import argparse
import sys

from .render import FIGURE_IDS, SchemaMismatch, render_all


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render rollout figures from a gainsched episode CSV.")
    parser.add_argument("--episode", required=True, help="episode CSV path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--only", choices=FIGURE_IDS,
                        help="render a single figure id")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        results = render_all(args.episode, args.out, only=args.only)
    except (SchemaMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for meta in results:
        print(f"wrote {meta['out_path']} ({meta['rows']} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
