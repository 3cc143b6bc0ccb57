"""Regret of the approximate Bayes-optimal policy, Thompson sampling and UCB on K-armed normal bandits.

Arm 1 has mean 0, the others Delta on a 21-point grid in [-1, 1].  Prior
N(1/sqrt(n), 1/n), UCB confidence delta = n^2.
"""
import argparse

import numpy as np

from bayes_hjb.harness import ExperimentConfig, emit_csv, regret_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, nargs="+", default=[5, 10, 20])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--sims", type=int, default=500)
    ap.add_argument("--points", type=int, default=21)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--prefix", default="normal_regret")
    args = ap.parse_args()
    deltas = tuple(float(x) for x in np.round(np.linspace(-1.0, 1.0, args.points), 12))
    for K in args.K:
        cfg = ExperimentConfig(K=K, n=args.n, sims=args.sims, params=deltas, policies=("bayes", "ts", "ucb"),
                               workers=args.workers)
        out = f"{args.prefix}_K{K}.csv"
        emit_csv(regret_sweep(cfg), out)
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
