"""Command-line entry point: render one summary CSV to one image file."""

from __future__ import annotations

import argparse
import sys

import matplotlib

from .figures import FigureSpec, plot_summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render regret curves from a summary CSV to an image file.",
    )
    parser.add_argument("--summary", required=True, help="input summary CSV")
    parser.add_argument(
        "--out", required=True, help="output image path; format follows the extension"
    )
    parser.add_argument(
        "--normalize",
        action="store_true",
        help="divide curves by the agent count m (per-agent regret)",
    )
    parser.add_argument("--title", default=None, help="figure title")
    return parser


def main(argv: list[str] | None = None) -> int:
    matplotlib.use("Agg")
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            summary_path=args.summary,
            out_path=args.out,
            normalize=args.normalize,
            title=args.title,
        )
        out = plot_summary(spec)
    except (FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
