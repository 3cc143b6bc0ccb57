"""Regret on the two-armed linear bandit: HJB grid policy, Thompson sampling and linear UCB.

Rewards a_k nu + N(0, 1) with nu on a grid in [-1/2, 1/2], prior N(0, 1/n),
f(n) = sqrt(n), grid N = 100.  One CSV per action pair.
"""
import argparse

import numpy as np

from bayes_hjb.harness import ExperimentConfig, emit_csv, regret_sweep
from bayes_hjb.hjb_model import PowerSeq

ACTION_PAIRS = [(0.1, -0.1), (0.1, -0.2), (0.1, 0.2)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--sims", type=int, default=500)
    ap.add_argument("--points", type=int, default=21)
    ap.add_argument("--grid-N", type=int, default=100)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--prefix", default="linear_regret")
    args = ap.parse_args()
    nus = tuple(float(x) for x in np.round(np.linspace(-0.5, 0.5, args.points), 12))
    for pair in ACTION_PAIRS:
        cfg = ExperimentConfig(family="linear", n=args.n, sims=args.sims, params=nus, actions=pair,
                               policies=("bayes", "ts", "ucb-lin"), prior_mean=PowerSeq(c_1=0.0),
                               prior_var=PowerSeq(c_inv=1.0), grid_N=args.grid_N, workers=args.workers)
        out = f"{args.prefix}_a{pair[0]:g}_{pair[1]:g}.csv"
        emit_csv(regret_sweep(cfg), out)
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
