#!/usr/bin/env python3
"""GWSAT walk-probability sweep on one instance.

Finds wp* by median run length on a coarse grid, then fits Weibull shapes at
0.2 wp*, wp* and 2 wp* (when that is still a probability).
"""
import argparse
import logging
from dataclasses import asdict

from rtdkit.cli import dumps
from rtdkit.cnf import read_dimacs
from rtdkit.experiments import gwsat_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("instance", help="DIMACS CNF file")
    ap.add_argument("--grid", type=float, nargs="+", default=[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--cutoff", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=99)
    ap.add_argument("-o", "--out", default="gwsat_sweep.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    sw = gwsat_sweep(read_dimacs(args.instance), tuple(args.grid), args.trials, args.cutoff, args.seed)
    for p in sw.coarse:
        print(f"wp={p.wp:<5g} success={p.success_rate:.3f} median={p.median} "
              f"alpha={p.alpha} ci={p.alpha_ci}")
    print(f"wp* = {sw.wp_star:g}; low = {sw.low.wp:g}; high = {sw.high_wp:g}")
    for k, v in sw.checks.items():
        print(f"  {'ok  ' if v else 'FAIL'} {k}")
    out = {"wp_star": sw.wp_star, "high_wp": sw.high_wp, "checks": sw.checks,
           "coarse": [asdict(p) for p in sw.coarse], "low": asdict(sw.low),
           "optimum": asdict(sw.optimum), "high": None if sw.high is None else asdict(sw.high)}
    with open(args.out, "w") as fh:
        fh.write(dumps(out))


if __name__ == "__main__":
    main()
