#!/usr/bin/env python3
"""Replay the figure protocols and write their datasets (CSV/JSON/SVG) to a directory.

    python3 scripts/run_figures.py --out figures --scale 0.05 switching cycling
"""
import argparse
import time
from pathlib import Path

from tkcla.figures import PROTOCOLS, FigureContext, run_figures


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="protocols to run: " + ", ".join(PROTOCOLS) + " (default: all)")
    ap.add_argument("--out", default="figures")
    ap.add_argument("--scale", type=float, default=0.01, help="fraction of the full horizons and trajectory counts")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    ctx = FigureContext(Path(args.out), scale=args.scale, seed=args.seed, threads=args.threads)
    t0 = time.perf_counter()
    manifest = run_figures(args.names, ctx)
    for name, info in manifest.items():
        print(f"{name:16s} {len(info['files']):3d} files")
    print(f"done in {time.perf_counter() - t0:.1f} s -> {args.out}/manifest.json")


if __name__ == "__main__":
    main()
