"""Probe-point errors |w^i(s, q)/n - v(t, s_hat, q_hat)| for the one-armed {0,1} bandit.

Prior Beta(n/2, n/2), known arm 1/2, f(n) = n, n doubling from 16 to --max-n.
"""
import argparse
import csv

from bayes_hjb.bandit_core import ZERO_ONE
from bayes_hjb.harness import OneArmedSetup, closed_form_value
from bayes_hjb.hjb_model import LINEAR_N, PowerSeq

PROBES = [(0.5, 0.25, 0.5), (0.5, 0.125, 0.25), (0.0, 0.0, 0.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-n", type=int, default=1024)
    ap.add_argument("--out", default="probe_errors.csv")
    args = ap.parse_args()

    setup = OneArmedSetup(alpha=PowerSeq(c_n=0.5), beta=PowerSeq(c_n=0.5), mu2=PowerSeq(c_1=0.5), support=ZERO_ONE)
    model = setup.limit(LINEAR_N)
    rows = []
    n = 16
    while n <= args.max_n:
        wanted = {}
        for t, s, q in PROBES:
            wanted.setdefault(int(round(t * n)) + 1, []).append((t, s, q))

        def visit(i, values, actions, n=n):
            for t, s, q in wanted.get(i, ()):
                v, _ = closed_form_value(model, t, s, q)
                rows.append((n, t, s, q, values[int(round(s * n)), int(round(q * n))] / n, float(v)))

        setup.solve_dp(n, visit)
        n *= 2
    rows.sort()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "t", "s_hat", "q_hat", "dp_value", "limit_value", "error"])
        for n, t, s, q, dp, v in rows:
            w.writerow([n, t, s, q, f"{dp:.12g}", f"{v:.12g}", f"{abs(dp - v):.12g}"])
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
