#!/usr/bin/env python3
"""Mean exit time of the reduced 1-D model: quadrature next to Monte Carlo.

    python3 scripts/exit_time_table.py --paths 2000 --dt 1e-3
"""
import argparse
import time

from tkcla.cla import cla1d_hitting_times
from tkcla.hitting import expected_exit_time
from tkcla.stats import summarize

CASES = [
    # (V, kappa', lambda', delta'), n
    ((8.0, 1.0, 0.5, 0.5), 1.0),
    ((16.0, 2.0, 0.5, 0.25), 1.0),
    ((64.0, 1.0, 1 / 32, 1 / 32), 2.0),
    ((64.0, 1.0, 1 / 256, 1 / 256), 2.0),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'params':>36s} {'n':>4s} {'quadrature':>12s} {'MC mean':>10s} {'MC se':>8s} {'sec':>6s}")
    for params, n in CASES:
        q = expected_exit_time(params, n).value
        t0 = time.perf_counter()
        s = summarize(cla1d_hitting_times(params, n, args.paths, args.dt, seed=args.seed, t_max=50 * q))
        print(f"{str(params):>36s} {n:4g} {q:12.5f} {s.mean:10.4f} {s.std_error:8.4f} {time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    main()
