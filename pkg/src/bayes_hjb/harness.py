"""Episode simulation, regret sweeps and the DP-vs-HJB convergence studies.

Randomness is drawn per episode from generators keyed by (seed, episode), so
each episode can be replayed alone, results do not depend on how episodes are
batched or split across workers, and every policy sees the same reward
sequence on each arm (rewards are indexed by arm and pull count).
"""
from __future__ import annotations

import csv
import logging
import math
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .bandit_core import (PM_GAMMA, ZERO_ONE, BernoulliEnvSpec, BetaParams, GaussianVecParams, LinearEnvSpec,
                          NormalEnvSpec, NormalParams, episode_streams, noise_kind, reward_from_noise)
from .errors import BanditError, ConfigError, PolicyError
from .exact_dp import read_dump, solve_one_armed_bernoulli
from .hjb_model import (LINEAR_N, SQRT_N, LimitModel, PowerSeq, ScalingFactor, bernoulli_limit, const,
                        linear_limit, normal_limit)
from .hjb_solver import GridSpec, read_grid_dump, solve, sweep
from . import policies as P

log = logging.getLogger(__name__)

REGRET_HEADER = ["policy", "param", "n", "sims", "mean_regret", "stderr", "clip_count"]
CONVERGENCE_HEADER = ["n", "N", "f_family", "e_pi", "e_w"]


# --------------------------------------------------------------------------
# episodes


@dataclass
class Tapes:
    """Pre-drawn randomness for a batch of episodes.

    ``reward[b, k, c]`` is the noise of the c-th pull of arm k in episode b;
    ``u``, ``z``, ``v`` are the policy's per-round uniforms, normals and
    per-arm uniforms.
    """

    reward: np.ndarray
    u: np.ndarray
    z: np.ndarray
    v: np.ndarray


def draw_tapes(env, n: int, seed: int, episodes: Sequence[int], z_dim: int) -> Tapes:
    K = env.K
    uniform = noise_kind(env) == "uniform"
    R, U, Z, V = [], [], [], []
    for e in episodes:
        rg, pg = episode_streams(seed, e)
        R.append(rg.random((K, n)) if uniform else rg.standard_normal((K, n)))
        U.append(pg.random(n))
        Z.append(pg.standard_normal((n, z_dim)))
        V.append(pg.random((n, K)))
    return Tapes(np.stack(R), np.stack(U), np.stack(Z), np.stack(V))


@dataclass
class BatchResult:
    regret: np.ndarray          # (B,) pseudo-regret
    reward: np.ndarray          # (B,) realized cumulative reward
    gaps: Optional[np.ndarray]  # (B, n) per-round gaps when requested
    arms: Optional[np.ndarray]  # (B, n)
    clip_count: int


def run_batch(policy: P.BatchPolicy, env, n: int, tapes: Tapes, keep_trace: bool = False) -> BatchResult:
    """Advance B episodes in lockstep; rounds 1..K pull arms 0..K-1 in order."""
    K = env.K
    if n < K:
        raise ConfigError(f"horizon n={n} is shorter than the initialization rounds (K={K})")
    B = tapes.reward.shape[0]
    means = env.means()
    mu_star = means.max()
    S = np.zeros((B, K))
    Q = np.zeros((B, K), dtype=np.int64)
    total = np.zeros(B)
    regret = np.zeros(B)
    gaps = np.zeros((B, n)) if keep_trace else None
    arms_trace = np.zeros((B, n), dtype=np.int64) if keep_trace else None
    rows = np.arange(B)
    policy.reset(B)
    for i in range(1, n + 1):
        if i <= K:
            arms = np.full(B, i - 1, dtype=np.int64)
        else:
            tape = {"u": tapes.u[:, i - 1], "z": tapes.z[:, i - 1], "v": tapes.v[:, i - 1]}
            try:
                arms = np.asarray(policy.select(i, S, Q, tape), dtype=np.int64)
            except BanditError as exc:
                raise PolicyError(i, exc) from exc
        noise = tapes.reward[rows, arms, Q[rows, arms]]
        r = reward_from_noise(env, arms, noise)
        policy.observe(arms, r)
        S[rows, arms] += r
        Q[rows, arms] += 1
        total += r
        g = mu_star - means[arms]
        regret += g
        if keep_trace:
            gaps[:, i - 1] = g
            arms_trace[:, i - 1] = arms
    return BatchResult(regret, total, gaps, arms_trace, int(getattr(policy, "clip_count", 0)))


@dataclass
class EpisodeResult:
    cumulative_reward: float
    regret: float
    clip_count: int
    arms: np.ndarray
    gaps: np.ndarray


def run_episode(policy: P.BatchPolicy, env, n: int, seed: int, episode: int = 0) -> EpisodeResult:
    tapes = draw_tapes(env, n, seed, [episode], _z_dim(env))
    res = run_batch(policy, env, n, tapes, keep_trace=True)
    return EpisodeResult(float(res.reward[0]), float(res.regret[0]), res.clip_count, res.arms[0], res.gaps[0])


def _z_dim(env) -> int:
    return max(env.K, getattr(env, "d", 1))


# --------------------------------------------------------------------------
# regret sweeps


@dataclass
class ExperimentConfig:
    """One regret sweep.

    ``params`` is the environment grid: the arm gap Delta for normal arms
    (arm 1 has mean 0, the others Delta), the parameter nu for the linear
    bandit, the arm-1 success probability for Bernoulli arms.
    """

    family: str = "normal"
    K: int = 5
    n: int = 1000
    sims: int = 500
    params: tuple = (0.0,)
    policies: tuple = ("bayes", "ts", "ucb")
    seed: int = 0
    sigma: float = 1.0
    scaling: str = SQRT_N
    prior_mean: Callable = field(default_factory=lambda: PowerSeq(c_isqrt=1.0))
    prior_var: Callable = field(default_factory=lambda: PowerSeq(c_inv=1.0))
    prior_alpha: Callable = field(default_factory=lambda: PowerSeq(c_n=0.5))
    prior_beta: Callable = field(default_factory=lambda: PowerSeq(c_n=0.5))
    support: str = ZERO_ONE
    gamma: float = 1.0
    other_nu: tuple = ()
    actions: tuple = (0.1, -0.1)
    grid_N: int = 100
    grid_S: Optional[float] = None
    lam: float = 1.0
    ucb_delta: Optional[float] = None
    lin_lambda: float = 0.1
    batch: int = 250
    workers: int = 1
    out: Optional[str] = None

    def __post_init__(self):
        if self.sims < 1:
            raise ConfigError("sims must be >= 1")
        if not self.params:
            raise ConfigError("the parameter grid is empty")
        if self.family not in ("normal", "bernoulli", "linear"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.n < self.K:
            raise ConfigError("n must be >= K")
        if self.family == "linear":
            object.__setattr__(self, "K", len(self.actions))

    def env(self, param):
        if self.family == "normal":
            return NormalEnvSpec((0.0,) + (float(param),) * (self.K - 1), self.sigma)
        if self.family == "linear":
            return LinearEnvSpec([float(param)], np.asarray(self.actions, dtype=float)[:, None], self.sigma)
        nu = (float(param),) + tuple(self.other_nu)
        if len(nu) != self.K:
            raise ConfigError(f"Bernoulli arms: got {len(nu)} success probabilities for K={self.K}")
        return BernoulliEnvSpec(nu, self.gamma, self.support)


@dataclass
class RegretRow:
    policy: str
    param: float
    n: int
    sims: int
    mean_regret: float
    stderr: float
    clip_count: int
    failed: bool = False


@dataclass
class RegretReport:
    rows: list = field(default_factory=list)

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.policy, r.param))


def limit_model(cfg: ExperimentConfig) -> LimitModel:
    f = ScalingFactor(cfg.scaling)
    if cfg.family == "normal":
        return normal_limit(cfg.prior_mean, cfg.prior_var, cfg.sigma, f, K=cfg.K)
    if cfg.family == "bernoulli":
        return bernoulli_limit(cfg.prior_alpha, cfg.prior_beta, cfg.gamma, f, K=cfg.K, support=cfg.support)
    return linear_limit(cfg.prior_mean, cfg.prior_var, cfg.sigma, f, np.asarray(cfg.actions, dtype=float))


def _finite_n(seq, n):
    return float(seq(float(n)))


def _check_arms(token, have, want):
    if have != want:
        raise ConfigError(f"{token}: table has {have} arms, the experiment has {want}")


def build_policy(token: str, cfg: ExperimentConfig, cache: Optional[dict] = None) -> P.BatchPolicy:
    """Policy from a CLI token: bayes, bayes-reg:<lam>, grid:<path>, ts, ucb:<delta>, ucb-lin:<lam>, dp:<path>."""
    cache = {} if cache is None else cache
    name, _, arg = token.partition(":")
    n, f = cfg.n, ScalingFactor(cfg.scaling)
    if name in ("bayes", "bayes-reg"):
        lam = 0.0 if name == "bayes" else (float(arg) if arg else cfg.lam)
        if name == "bayes-reg" and not lam > 0:
            raise ConfigError("bayes-reg needs a positive lambda")
        model = limit_model(cfg)
        if model.kind == "ratio":
            return P.ClosedFormPolicy(n, f, model.alpha_hat, model.beta_hat, lam)
        # no closed form for the structured model: solve its HJB on a grid
        key = ("grid", lam)
        if key not in cache:
            grid = GridSpec.for_scaling(cfg.grid_N, f, cfg.grid_S)
            cache[key] = solve(model, grid, lam=lam, simplex=True, persist="policy")
        pol = P.GridPolicy(cache[key], n, f)
        pol.name = name
        return pol
    if name == "grid":
        key = ("file", arg)
        if key not in cache:
            cache[key] = read_grid_dump(arg)
        _check_arms(token, cache[key].K, cfg.K)
        return P.GridPolicy(cache[key], n)
    if name == "dp":
        key = ("dp", arg)
        if key not in cache:
            cache[key] = read_dump(arg)
        _check_arms(token, cache[key].K, cfg.K)
        return P.DPPolicy(cache[key])
    if name == "ts":
        if cfg.family == "linear":
            d = 1
            prior = GaussianVecParams([_finite_n(cfg.prior_mean, n)] * d, np.eye(d) * _finite_n(cfg.prior_var, n))
            return P.LinearThompsonPolicy(prior, cfg.sigma, np.asarray(cfg.actions, dtype=float))
        if cfg.family == "normal":
            priors = [NormalParams(_finite_n(cfg.prior_mean, n), _finite_n(cfg.prior_var, n))] * cfg.K
            return P.ThompsonPolicy(priors, "normal", cfg.sigma)
        priors = [BetaParams(_finite_n(cfg.prior_alpha, n), _finite_n(cfg.prior_beta, n))] * cfg.K
        return P.ThompsonPolicy(priors, "bernoulli", gamma=cfg.gamma, support=cfg.support)
    if name == "ucb":
        delta = float(arg) if arg else (cfg.ucb_delta or float(n) ** 2)
        return P.UCBPolicy(delta)
    if name == "ucb-lin":
        return P.LinearUCBPolicy(n, np.asarray(cfg.actions, dtype=float), float(arg) if arg else cfg.lin_lambda)
    if name == "uniform":
        return P.UniformPolicy()
    raise ConfigError(f"unknown policy token {token!r}")


def _run_cell(args):
    """Worker entry: regrets of one episode chunk for one (policy, param) cell."""
    token, cfg, param, episodes = args
    policy = build_policy(token, cfg)
    env = cfg.env(param)
    tapes = draw_tapes(env, cfg.n, cfg.seed, episodes, _z_dim(env))
    res = run_batch(policy, env, cfg.n, tapes)
    return res.regret, res.clip_count


def _chunks(sims, size):
    return [list(range(a, min(a + size, sims))) for a in range(0, sims, size)]


def regret_sweep(cfg: ExperimentConfig, progress: Optional[Callable] = None) -> RegretReport:
    """Mean pseudo-regret and its standard error for every (policy, param) cell.

    Episode e of every cell uses the streams keyed by (seed, e); chunk results
    are reassembled in episode order before averaging, so the output does not
    depend on ``workers`` or ``batch``.
    """
    report = RegretReport()
    chunks = _chunks(cfg.sims, max(1, cfg.batch))
    cache: dict = {}
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for token in cfg.policies:
            for param in cfg.params:
                try:
                    if pool is None:
                        policy = build_policy(token, cfg, cache)
                        env = cfg.env(param)
                        parts = []
                        for ep in chunks:
                            tapes = draw_tapes(env, cfg.n, cfg.seed, ep, _z_dim(env))
                            res = run_batch(policy, env, cfg.n, tapes)
                            parts.append((res.regret, res.clip_count))
                    else:
                        parts = list(pool.map(_run_cell, [(token, cfg, param, ep) for ep in chunks]))
                    regrets = np.concatenate([p[0] for p in parts])
                    clips = sum(p[1] for p in parts)
                    sd = float(np.std(regrets, ddof=1)) if cfg.sims > 1 else 0.0
                    row = RegretRow(token, float(param), cfg.n, cfg.sims, float(np.mean(regrets)),
                                    sd / math.sqrt(cfg.sims), clips)
                except (BanditError, ValueError) as exc:
                    if isinstance(exc, ConfigError):
                        raise
                    log.error("policy %s at param %g failed: %s", token, param, exc)
                    row = RegretRow(token, float(param), cfg.n, cfg.sims, math.nan, math.nan, -1, failed=True)
                report.rows.append(row)
                if progress is not None:
                    progress(row)
    finally:
        if pool is not None:
            pool.shutdown()
    return report


# --------------------------------------------------------------------------
# convergence studies


_Hyper = namedtuple("_Hyper", "alpha beta")


@dataclass(frozen=True)
class OneArmedSetup:
    """One unknown Bernoulli arm against a known arm; hyperparameters as sequences in n."""

    alpha: Callable = PowerSeq(c_n=1.0)
    beta: Callable = PowerSeq(c_n=1.0, c_sqrt=-1.0)
    mu2: Callable = PowerSeq(c_isqrt=1.0 / 3.0)
    support: str = PM_GAMMA
    gamma: float = 1.0

    def limit(self, scaling) -> LimitModel:
        return bernoulli_limit(self.alpha, self.beta, self.gamma, ScalingFactor(scaling), support=self.support,
                               fixed=(self.mu2,))

    def solve_dp(self, n, visit, keep="root"):
        a, b = float(self.alpha(n)), float(self.beta(n))
        # the default sequences give beta(1) = 0, an improper prior; the recursion only
        # divides by alpha + beta + q, so the hyperparameters are passed unvalidated
        prior = BetaParams(a, b) if a > 0 and b > 0 else _Hyper(a, b)
        return solve_one_armed_bernoulli(n, prior, float(self.mu2(n)), self.support, self.gamma, keep=keep,
                                         visit=visit)

    def rectangle(self, i):
        """Reward-unit and pull-count axes of the round-i rectangle."""
        lo = 0 if self.support == ZERO_ONE else -(i - 1)
        hi = i - 1
        return np.arange(lo, hi + 1)[:, None], np.arange(i)[None, :]


DEFAULT_SETUP = OneArmedSetup()


@dataclass
class ConvergenceRow:
    n: int
    N: Optional[int]
    f_family: str
    e_pi: float
    e_w: float


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)


class _Accumulator:
    def __init__(self):
        self.pi = 0.0
        self.w = 0.0
        self.count = 0

    def add(self, dpi, dw, mask):
        if mask is None:
            self.pi += float(np.sum(dpi))
            self.w += float(np.sum(dw))
            self.count += dw.size
        else:
            self.pi += float(np.sum(dpi[mask]))
            self.w += float(np.sum(dw[mask]))
            self.count += int(np.sum(mask))

    def result(self):
        return self.pi / self.count, self.w / self.count


def _reachable(m, q, support):
    if support == ZERO_ONE:
        return np.broadcast_to(m <= q, np.broadcast(m, q).shape)
    return (np.abs(m) <= q) & ((m + q) % 2 == 0)


def closed_form_value(model: LimitModel, t, s_hat, q_hat):
    """Value and arm-0 indicator of the closed-form policy of the one-armed model."""
    mu = model.arm_drift(0, s_hat, q_hat)
    mu2 = model.constant[0]
    return (1.0 - t) * np.maximum(mu, mu2), (mu >= mu2)


def convergence_exact(n_list, scaling, setup: OneArmedSetup = DEFAULT_SETUP,
                      reachable_only: bool = False) -> ConvergenceReport:
    """Average policy and value gaps between the DP and the closed-form HJB solution.

    Sums run over rounds i = 1..n and the full (s, q) rectangle of each
    round (or its reachable part).  e_w compares w / f(n) with v directly.
    """
    f = ScalingFactor(scaling)
    model = setup.limit(f.family)
    report = ConvergenceReport()
    for n in n_list:
        fn = f(n)
        acc = _Accumulator()
        unit = 1.0 if setup.support == ZERO_ONE else setup.gamma

        def visit(i, values, actions):
            m, q = setup.rectangle(i)
            v, pi_hat = closed_form_value(model, (i - 1) / n, m * unit / fn, q / n)
            mask = _reachable(m, q, setup.support) if reachable_only else None
            acc.add((actions == 0) != pi_hat, np.abs(values / fn - v), mask)

        setup.solve_dp(n, visit)
        e_pi, e_w = acc.result()
        report.rows.append(ConvergenceRow(n, None, f.family, e_pi, e_w))
    return report


class _LazySweep:
    """Walks a solver sweep backward, holding the slice that contains a requested time."""

    def __init__(self, model, grid):
        self.grid = grid
        self.it = sweep(model, grid)
        self.cur = None

    def slice_at(self, l):
        while self.cur is None or self.cur[0] > l:
            self.cur = next(self.it)
        return self.cur


def default_numeric_S(scaling, n_list):
    """Cutoff covering every rescaled reward of the DP rectangles (|s| <= n - 1)."""
    if ScalingFactor(scaling).family == LINEAR_N:
        return 1.0
    return max(4.0, max((n - 1) / math.sqrt(n) for n in n_list))


def convergence_numeric(n_list, N_list, scaling, setup: OneArmedSetup = DEFAULT_SETUP,
                        S: Optional[float] = None, reachable_only: bool = False) -> ConvergenceReport:
    """Average policy and value gaps between the DP and finite-difference HJB grids.

    Grids use dt = dq = 1/N with ds = 1/sqrt(N) for f = sqrt(n) (diffusive
    scheme) or ds = 1/N for f = n (upwind scheme).  A DP state maps to the
    floor node l = floor((i-1)/(n dt)), m = floor(s/(f(n) ds)),
    j = floor(q/(n dq)).  For f = sqrt(n) the value gap is divided by
    sqrt(n) to put both families on one scale.
    """
    f = ScalingFactor(scaling)
    model = setup.limit(f.family)
    S = default_numeric_S(f.family, n_list) if S is None else S
    grids = {N: GridSpec.for_scaling(N, f, S) for N in N_list}
    report = ConvergenceReport()
    unit = 1.0 if setup.support == ZERO_ONE else setup.gamma
    for n in n_list:
        fn = f(n)
        walkers = {N: _LazySweep(model, g) for N, g in grids.items()}
        accs = {N: _Accumulator() for N in N_list}
        rescale = 1.0 / math.sqrt(n) if f.family == SQRT_N else 1.0

        def visit(i, values, actions):
            m, q = setup.rectangle(i)
            mask = _reachable(m, q, setup.support) if reachable_only else None
            for N, w in walkers.items():
                g = w.grid
                l = int(math.floor((i - 1) / (n * g.dt) + 1e-9))
                _, V, A, _ = w.slice_at(l)
                mi = np.clip(np.floor(m * unit / (fn * g.ds) + 1e-9).astype(np.int64), -g.N_s, g.N_s) + g.N_s
                ji = np.clip(np.floor(q / (n * g.dq) + 1e-9).astype(np.int64), 0, g.N_q)
                accs[N].add(A[mi, ji] != actions, np.abs(values / fn - V[mi, ji]) * rescale, mask)

        setup.solve_dp(n, visit)
        for N in N_list:
            e_pi, e_w = accs[N].result()
            report.rows.append(ConvergenceRow(n, N, f.family, e_pi, e_w))
    return report


# --------------------------------------------------------------------------
# CSV


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def emit_csv(report, path) -> None:
    """Write a regret or convergence report; floats carry 12 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(report, RegretReport):
            w.writerow(REGRET_HEADER)
            for r in report.sorted_rows():
                w.writerow([r.policy, _fmt(r.param), r.n, r.sims, _fmt(r.mean_regret), _fmt(r.stderr),
                            r.clip_count])
        elif isinstance(report, ConvergenceReport):
            w.writerow(CONVERGENCE_HEADER)
            for r in report.rows:
                w.writerow([r.n, _fmt(r.N), r.f_family, _fmt(r.e_pi), _fmt(r.e_w)])
        else:
            raise TypeError(f"cannot write {type(report).__name__}")
