"""Command line entry: plot --run DIR --figure KIND --out PATH."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, PlotJob, render
from .schema import SchemaError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render a figure from a run directory.")
    parser.add_argument("--run", required=True, type=Path,
                        help="run directory (holds manifest.txt and combo subdirectories)")
    parser.add_argument("--figure", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, type=Path, help="output image path")
    parser.add_argument("--combo", help="combo directory name, e.g. M9_k0.5_rep0")
    parser.add_argument("--index", type=int, help="snapshot grid index for heatmaps")
    parser.add_argument("--cmap", default="viridis")
    parser.add_argument("--bare", action="store_true",
                        help="panels only: no text, ticks, or colorbar")
    args = parser.parse_args(argv)

    try:
        out = render(PlotJob(run=args.run, figure=args.figure, out=args.out,
                             combo=args.combo, index=args.index,
                             cmap=args.cmap, bare=args.bare))
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort reporting
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
