"""Command line: dp-exact, solve-hjb, regret, converge.

Exit codes: 0 success, 1 configuration or usage error, 2 stability refusal,
3 capacity error.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import exact_dp, harness
from .bandit_core import BetaParams
from .config import experiment_from_kv, model_from_kv, parse_kv
from .errors import BanditError, CapacityError, ConfigError, StabilityError
from .hjb_model import ScalingFactor
from .hjb_solver import AUTO, DETERMINISTIC, DIFFUSIVE, GridSpec, solve, write_grid_dump

EXIT_OK, EXIT_CONFIG, EXIT_STABILITY, EXIT_CAPACITY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _pair(text):
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected alpha,beta, got {text!r}")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bayes-hjb", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    d = sub.add_parser("dp-exact", help="Bayes-optimal values by backward induction")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--prior", type=_pair, action="append", required=True,
                   help="alpha,beta of a Bernoulli arm; repeat for K arms")
    d.add_argument("--mu2", type=float, help="mean of the known arm (one-armed problem)")
    d.add_argument("--support", choices=["zero-one", "pm-gamma"], default="zero-one")
    d.add_argument("--gamma", type=float, default=1.0)
    d.add_argument("--dump")
    d.add_argument("--mem-cap-mb", type=float, default=exact_dp.DEFAULT_MEM_CAP / 2**20)

    s = sub.add_parser("solve-hjb", help="finite-difference HJB solve")
    s.add_argument("--model", required=True)
    s.add_argument("--Nt", type=int, default=100)
    s.add_argument("--Ns", type=int)
    s.add_argument("--Nq", type=int)
    s.add_argument("--S", type=float)
    s.add_argument("--scheme", choices=[DIFFUSIVE, DETERMINISTIC, AUTO], default=AUTO)
    s.add_argument("--lambda", dest="lam", type=float, default=0.0)
    s.add_argument("--simplex", action="store_true", help="keep only nodes with sum(q) = t")
    s.add_argument("--dump")

    r = sub.add_parser("regret", help="regret sweep over an environment grid")
    r.add_argument("--config", required=True)
    r.add_argument("--policies", nargs="+")
    r.add_argument("--seed", type=int)
    r.add_argument("--sims", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out")

    c = sub.add_parser("converge", help="DP vs HJB convergence errors")
    c.add_argument("--mode", choices=["exact", "numeric"], required=True)
    c.add_argument("--ns", type=_int_list, required=True)
    c.add_argument("--Ns", type=_int_list, default=[50, 500])
    c.add_argument("--scaling", choices=["sqrt", "linear", "sqrt_n", "linear_n"], required=True)
    c.add_argument("--S", type=float)
    c.add_argument("--reachable-only", action="store_true")
    c.add_argument("--out")
    return p


def cmd_dp_exact(a):
    cap = int(a.mem_cap_mb * 2**20)
    priors = [BetaParams(*x) for x in a.prior]
    if a.mu2 is not None:
        table = exact_dp.solve_one_armed_bernoulli(a.n, priors[0], a.mu2, a.support, a.gamma, mem_cap=cap)
    else:
        table = exact_dp.solve_k_armed(a.n, priors, a.gamma, a.support, mem_cap=cap)
    print(f"root value {table.root_value():.12g}")
    print(f"first action {int(table.rounds[1][1].reshape(-1)[0])}")
    if a.dump:
        exact_dp.write_dump(table, a.dump)


def cmd_solve_hjb(a):
    d = parse_kv(a.model)
    model = model_from_kv(d)
    if a.Ns is None or a.S is None:
        base = GridSpec.for_scaling(a.Nt, d.get("scaling", "sqrt_n"), a.S)
        N_s = a.Ns or base.N_s
        S = a.S if a.S is not None else base.S
    else:
        N_s, S = a.Ns, a.S
    grid = GridSpec(a.Nt, N_s, a.Nq or a.Nt, S)
    v = solve(model, grid, a.scheme, lam=a.lam, simplex=a.simplex, persist="all" if a.dump else "none")
    print(f"scheme {v.scheme} grid {grid}")
    print(f"root node value {float(v.root.reshape(-1)[v.root.size // 2]):.12g}")
    if a.dump:
        write_grid_dump(v, a.dump)


def cmd_regret(a):
    d = parse_kv(a.config)
    cfg = experiment_from_kv(d)
    over = {}
    if a.policies:
        over["policies"] = tuple(a.policies)
    if a.seed is not None:
        over["seed"] = a.seed
    if a.sims is not None:
        over["sims"] = a.sims
    if a.workers is not None:
        over["workers"] = a.workers
    if over:
        cfg = harness.replace(cfg, **over)
    report = harness.regret_sweep(cfg, progress=lambda row: logging.info(
        "%s param=%g mean=%.4f se=%.4f", row.policy, row.param, row.mean_regret, row.stderr))
    out = a.out or cfg.out
    if out:
        harness.emit_csv(report, out)
    else:
        for row in report.sorted_rows():
            print(f"{row.policy:>12} {row.param:>8g} {row.mean_regret:12.4f} +- {row.stderr:.4f}")
    return EXIT_CONFIG if any(r.failed for r in report.rows) else EXIT_OK


def cmd_converge(a):
    fam = ScalingFactor(a.scaling).family
    if a.mode == "exact":
        report = harness.convergence_exact(a.ns, fam, reachable_only=a.reachable_only)
    else:
        report = harness.convergence_numeric(a.ns, a.Ns, fam, S=a.S, reachable_only=a.reachable_only)
    if a.out:
        harness.emit_csv(report, a.out)
    else:
        for r in report.rows:
            print(f"n={r.n} N={r.N} {r.f_family} e_pi={r.e_pi:.6g} e_w={r.e_w:.6g}")


COMMANDS = {"dp-exact": cmd_dp_exact, "solve-hjb": cmd_solve_hjb, "regret": cmd_regret, "converge": cmd_converge}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args) or EXIT_OK
    except StabilityError as exc:
        msg = f"stability refusal: {exc}"
        if exc.suggested_dt is not None:
            msg += f" (suggested dt <= {exc.suggested_dt:.6g}, i.e. Nt >= {int(np.ceil(1 / exc.suggested_dt))})"
        print(msg, file=sys.stderr)
        return EXIT_STABILITY
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (BanditError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
