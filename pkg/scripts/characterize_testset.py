#!/usr/bin/env python3
"""WSAT run-length distributions over a 100-variable test set.

Prints the hardness spread (median run lengths across instances) and the
chi-square verdicts for the hardest instances; writes the full record as JSON.
"""
import argparse
import logging

from rtdkit.cli import dumps
from rtdkit.experiments import CharacterizationConfig, characterize


def main():
    d = CharacterizationConfig()
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--num-vars", type=int, default=d.num_vars)
    ap.add_argument("--count", type=int, default=d.count)
    ap.add_argument("--clause-ratio", type=float, default=d.clause_ratio)
    ap.add_argument("--testset-seed", type=int, default=d.testset_seed)
    ap.add_argument("--run-seed", type=int, default=d.run_seed)
    ap.add_argument("--noise", type=float, default=d.noise)
    ap.add_argument("--trials", type=int, default=d.n_trials)
    ap.add_argument("--cutoff", type=int, default=d.cutoff)
    ap.add_argument("--hardest", type=int, default=d.hardest)
    ap.add_argument("--significance", type=float, default=d.significance)
    ap.add_argument("-o", "--out", default="characterization.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = CharacterizationConfig(args.num_vars, args.clause_ratio, args.count, args.testset_seed,
                                 args.run_seed, args.noise, args.trials, args.cutoff,
                                 args.hardest, args.significance)
    res = characterize(cfg)
    h = res.hardness
    print(f"medians {h['min']:g} .. {h['max']:g} (median {h['median']:g}), "
          f"max/min = {h['max_min_ratio']:.1f}")
    for e in res.hardest:
        print(f"  {e['instance']}  median={e.get('median')}  p={e.get('p_value')}  passed={e['passed']}")
    print(f"chi2 pass fraction on hardest {len(res.hardest)}: {res.pass_fraction:.2f}")
    with open(args.out, "w") as fh:
        fh.write(dumps(res.to_dict()))


if __name__ == "__main__":
    main()
