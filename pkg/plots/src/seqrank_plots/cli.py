"""Command-line entry point: seqrank-plot <kind> --in CSV --out IMG.

Exit codes mirror the simulator CLI: 0 success, 2 validation error,
3 runtime error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, PlotJob, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqrank-plot",
        description="Render study result CSVs to SVG figures",
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="input_csv", required=True,
                        help="results CSV from the simulator")
    parser.add_argument("--out", dest="output_image", required=True,
                        help="output SVG path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = PlotJob(input_csv=args.input_csv, kind=args.kind,
                      output_image=args.output_image)
        render(job)
    except SchemaError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # matplotlib failures and the like
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
