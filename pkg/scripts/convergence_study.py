"""Policy and value errors between the exact DP and the HJB solution for the one-armed +/-1 bandit.

Prior Beta(n, n - sqrt(n)), known arm 1/(3 sqrt(n)).  Error 0 compares with
the closed-form limit, error 1 with finite-difference grids of size N.
"""
import argparse

from bayes_hjb.harness import convergence_exact, convergence_numeric, emit_csv
from bayes_hjb.hjb_model import LINEAR_N, SQRT_N


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ns", default="16,32,64,128,256,512,1024")
    ap.add_argument("--Ns", default="50,500")
    ap.add_argument("--reachable-only", action="store_true")
    ap.add_argument("--prefix", default="convergence")
    args = ap.parse_args()
    ns = [int(x) for x in args.ns.split(",")]
    Ns = [int(x) for x in args.Ns.split(",")]
    for fam in (SQRT_N, LINEAR_N):
        emit_csv(convergence_exact(ns, fam, reachable_only=args.reachable_only), f"{args.prefix}_exact_{fam}.csv")
        emit_csv(convergence_numeric(ns, Ns, fam, reachable_only=args.reachable_only),
                 f"{args.prefix}_numeric_{fam}.csv")
        print(f"wrote {args.prefix}_exact_{fam}.csv and {args.prefix}_numeric_{fam}.csv")


if __name__ == "__main__":
    main()
