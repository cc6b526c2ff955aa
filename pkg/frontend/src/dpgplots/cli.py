"""Script entry points: each renders one figure from one CSV artifact."""

from __future__ import annotations

import argparse
import sys

from .plots import SchemaError, plot_convergence, plot_field


def _parser(description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--in", dest="input_path", required=True, help="input CSV artifact")
    parser.add_argument("--out", dest="output_path", required=True, help="output image file")
    return parser


def main_convergence(argv=None) -> int:
    args = _parser("log-log convergence curves from a refinement-sweep CSV").parse_args(argv)
    try:
        result = plot_convergence(args.input_path, args.output_path)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output_path}: {result.n_series} series")
    return 0


def main_field(argv=None) -> int:
    args = _parser("pressure heatmap from a sampled-solution CSV").parse_args(argv)
    try:
        result = plot_field(args.input_path, args.output_path)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output_path}: {result.grid_shape[0]}x{result.grid_shape[1]} cells")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main_convergence())
