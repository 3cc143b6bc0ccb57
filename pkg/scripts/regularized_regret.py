"""Regularized vs unregularized approximate Bayes-optimal policies under a poor prior.

Normal bandit (K = 5) with prior N(0.01 sqrt(n), 1) and the two-armed linear
bandits with prior N(sqrt(n), 1).  Each lambda in --lambdas adds a
``bayes-reg:<lambda>`` column next to the unregularized ``bayes`` policy.
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
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    ap.add_argument("--skip-linear", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--prefix", default="regularized")
    args = ap.parse_args()
    policies = ("bayes",) + tuple(f"bayes-reg:{lam:g}" for lam in args.lambdas)

    deltas = tuple(float(x) for x in np.round(np.linspace(-1.0, 1.0, args.points), 12))
    cfg = ExperimentConfig(K=5, n=args.n, sims=args.sims, params=deltas, policies=policies,
                           prior_mean=PowerSeq(c_sqrt=0.01), prior_var=PowerSeq(c_1=1.0), workers=args.workers)
    rep = regret_sweep(cfg)
    emit_csv(rep, f"{args.prefix}_normal.csv")
    for p in policies:
        mean = np.mean([r.mean_regret for r in rep.rows if r.policy == p])
        print(f"normal {p}: average regret over the Delta grid {mean:.4g}")

    if args.skip_linear:
        return
    nus = tuple(float(x) for x in np.round(np.linspace(-0.5, 0.5, args.points), 12))
    for pair in ACTION_PAIRS:
        cfg = ExperimentConfig(family="linear", n=args.n, sims=args.sims, params=nus, actions=pair,
                               policies=policies, prior_mean=PowerSeq(c_sqrt=1.0), prior_var=PowerSeq(c_1=1.0),
                               workers=args.workers)
        out = f"{args.prefix}_linear_a{pair[0]:g}_{pair[1]:g}.csv"
        emit_csv(regret_sweep(cfg), out)
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
