"""Arm-selection rules.

Each rule exists in two forms: a per-history function mirroring the
textbook statement (easy to test by hand) and a batched class used by the
harness, which advances many independent episodes in lockstep.  Batched
policies receive pre-drawn randomness (uniforms and normals per episode and
round) so that every policy sees the same random numbers.

Ties always go to the lowest arm index (``np.argmax`` semantics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import softmax

from .bandit_core import (PM_GAMMA, ZERO_ONE, BetaParams, GaussianVecParams, HistoryState, NormalParams,
                          linear_posterior_batch, posterior_linear)
from .errors import RequiresInitializationError, UnsupportedDimensionError
from .hjb_model import ScalingFactor
from .hjb_solver import GridValueFunction


def _one_hot(k, K):
    w = np.zeros(K)
    w[k] = 1.0
    return w


def _closed_form_index(s, q, n, f, alpha_hat, beta_hat):
    fn = f(n) if callable(f) else float(f)
    den = np.asarray(q, dtype=float) + n * np.asarray(beta_hat, dtype=float)
    if np.any(den <= 0):
        raise RequiresInitializationError("index denominator q_k + n beta_hat_k is zero; pull every arm once first")
    return (np.asarray(s, dtype=float) + fn * np.asarray(alpha_hat, dtype=float)) / den


def exact_unregularized(h: HistoryState, n: int, f, alpha_hat, beta_hat) -> np.ndarray:
    """One-hot on argmax_k (s_k + f(n) alpha_hat_k) / (q_k + n beta_hat_k)."""
    idx = _closed_form_index(h.s, h.q, n, f, alpha_hat, beta_hat)
    return _one_hot(int(np.argmax(idx)), h.K)


def exact_regularized(h: HistoryState, n: int, f, alpha_hat, beta_hat, lam: float) -> np.ndarray:
    """Softmax of the same index with inverse temperature n / (lam f(n))."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    fn = f(n) if callable(f) else float(f)
    idx = _closed_form_index(h.s, h.q, n, f, alpha_hat, beta_hat)
    return softmax(n / (lam * fn) * idx)


def grid_policy(h: HistoryState, i: int, v: GridValueFunction, n: int, f) -> np.ndarray:
    """Policy of the solved grid at the rescaled state ((i-1)/n, s/f(n), q/n)."""
    fn = f(n) if callable(f) else float(f)
    _, pol, clipped = v.lookup_batch([(i - 1) / n], (h.s[:v.K_state] / fn)[None],
                                     (h.q[:v.K_state] / n)[None], need_value=False)
    if clipped[0]:
        v.clip_events += 1
    return pol[0]


def thompson_unstructured(h: HistoryState, posteriors, rng: np.random.Generator, gamma: float = 1.0,
                          support: str = ZERO_ONE) -> int:
    """Sample one parameter per arm from its posterior and play the best sampled mean."""
    draws = []
    for p in posteriors:
        if isinstance(p, BetaParams):
            nu = rng.beta(p.alpha, p.beta)
            draws.append(nu if support == ZERO_ONE else gamma * (2 * nu - 1))
        else:
            draws.append(p.mean + math.sqrt(p.variance) * rng.standard_normal())
    return int(np.argmax(draws))


def ucb_unstructured(h: HistoryState, delta: float) -> int:
    """argmax_k s_k/q_k + sqrt(2 log(delta) / q_k)."""
    if np.any(h.q == 0):
        raise RequiresInitializationError("UCB needs every arm pulled once")
    q = h.q.astype(float)
    return int(np.argmax(h.s / q + np.sqrt(2.0 * math.log(delta) / q)))


def ucb_bonus(q, delta):
    return np.sqrt(2.0 * math.log(delta) / np.asarray(q, dtype=float))


def thompson_linear(post: GaussianVecParams, actions, rng: np.random.Generator) -> int:
    A = np.asarray(actions, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    nu = post.mean + post.chol @ rng.standard_normal(post.d)
    return int(np.argmax(A @ nu))


@dataclass
class LinUCBState:
    """Running scalars of scalar linear UCB: V = lam + sum x^2, W = sum x y."""

    V: float
    W: float = 0.0

    @property
    def nu_hat(self) -> float:
        return self.W / self.V

    def update(self, x: float, y: float) -> None:
        self.V += x * x
        self.W += x * y


def ucb_linear_beta(i: int, n: int, lam: float) -> float:
    return math.sqrt(lam) + math.sqrt(2.0 * math.log(float(n) ** 2) + math.log(1.0 + (i - 1) / lam))


def ucb_linear(state: LinUCBState, i: int, n: int, actions, lambda_reg: float = 0.1) -> int:
    """argmax_k a_k nu_hat + beta_i sqrt(a_k^2 / V); scalar parameter only."""
    A = np.asarray(actions, dtype=float)
    if A.ndim == 2:
        if A.shape[1] != 1:
            raise UnsupportedDimensionError("linear UCB is implemented for a scalar parameter (d = 1) only")
        A = A[:, 0]
    beta = ucb_linear_beta(i, n, lambda_reg)
    return int(np.argmax(A * state.nu_hat + beta * np.sqrt(A * A / state.V)))


def is_distribution(w, tol: float = 1e-10) -> bool:
    w = np.asarray(w, dtype=float)
    return bool(np.all(w >= 0) and abs(w.sum() - 1.0) <= tol)


# --------------------------------------------------------------------------
# batched policies


def sample_from(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one arm per row; one-hot rows return their arm for any u."""
    c = np.cumsum(weights, axis=1)
    c[:, -1] = np.inf
    return np.argmax(u[:, None] < c, axis=1)


class BatchPolicy:
    """Base class: ``select(i, S, Q, tape)`` returns one arm per episode.

    ``tape`` holds this round's pre-drawn randomness: ``u`` (B,) for sampling
    from a distribution, ``z`` (B, m) standard normals and ``v`` (B, K)
    uniforms for posterior sampling.
    """

    name = "policy"
    param: Optional[float] = None

    def reset(self, B: int) -> None:
        self.clip_count = 0

    def select(self, i, S, Q, tape) -> np.ndarray:
        raise NotImplementedError

    def observe(self, arms, rewards) -> None:
        pass


class ClosedFormPolicy(BatchPolicy):
    """Approximate Bayes-optimal index policy, greedy or tempered."""

    def __init__(self, n, f, alpha_hat, beta_hat, lam: float = 0.0):
        self.n = n
        if isinstance(f, str):
            f = ScalingFactor(f)
        self.f = f if callable(f) else (lambda _n, v=float(f): v)
        self.alpha_hat = np.asarray(alpha_hat, dtype=float)
        self.beta_hat = np.asarray(beta_hat, dtype=float)
        self.lam = float(lam)
        self.name = "bayes-reg" if lam > 0 else "bayes"
        self.param = lam if lam > 0 else None

    def select(self, i, S, Q, tape):
        idx = _closed_form_index(S, Q, self.n, self.f, self.alpha_hat, self.beta_hat)
        if self.lam == 0:
            return np.argmax(idx, axis=1)
        w = softmax(self.n / (self.lam * self.f(self.n)) * idx, axis=1)
        return sample_from(w, tape["u"])


class GridPolicy(BatchPolicy):
    name = "grid"

    def __init__(self, v: GridValueFunction, n, f=None):
        self.v, self.n = v, n
        self.f = ScalingFactor(f or v.scaling)

    def select(self, i, S, Q, tape):
        fn = self.f(self.n)
        t = np.full(S.shape[0], (i - 1) / self.n)
        _, pol, clipped = self.v.lookup_batch(t, S[:, :self.v.K_state] / fn, Q[:, :self.v.K_state] / self.n,
                                                need_value=False)
        self.clip_count += int(clipped.sum())
        return sample_from(pol, tape["u"])


class ThompsonPolicy(BatchPolicy):
    """Thompson sampling for Bernoulli (Beta) or normal arms."""

    name = "ts"

    def __init__(self, priors, family: str, sigma: float = 1.0, gamma: float = 1.0, support: str = ZERO_ONE):
        self.priors, self.family = list(priors), family
        self.sigma, self.gamma, self.support = sigma, gamma, support

    def select(self, i, S, Q, tape):
        K = S.shape[1]
        if self.family == "bernoulli":
            a = np.array([p.alpha for p in self.priors])
            b = np.array([p.beta for p in self.priors])
            if self.support == ZERO_ONE:
                a, b = a + S, b + Q - S
            else:
                a, b = a + S / (2 * self.gamma) + Q / 2, b - S / (2 * self.gamma) + Q / 2
            nu = stats.beta.ppf(tape["v"][:, :K], a, b)
            draw = nu if self.support == ZERO_ONE else self.gamma * (2 * nu - 1)
        else:
            m = np.array([p.mean for p in self.priors])
            var = np.array([p.variance for p in self.priors])
            prec = Q * self.sigma ** -2 + 1.0 / var
            mean = (m / var + S * self.sigma ** -2) / prec
            draw = mean + np.sqrt(1.0 / prec) * tape["z"][:, :K]
        return np.argmax(draw, axis=1)


class UCBPolicy(BatchPolicy):
    name = "ucb"

    def __init__(self, delta: float):
        if not delta > 1:
            raise ValueError("delta must exceed 1")
        self.delta = float(delta)
        self.param = self.delta

    def select(self, i, S, Q, tape):
        if np.any(Q == 0):
            raise RequiresInitializationError("UCB needs every arm pulled once")
        return np.argmax(S / Q + ucb_bonus(Q, self.delta), axis=1)


class LinearThompsonPolicy(BatchPolicy):
    name = "ts"

    def __init__(self, prior: GaussianVecParams, sigma: float, actions):
        self.prior, self.sigma = prior, sigma
        A = np.asarray(actions, dtype=float)
        self.A = A[:, None] if A.ndim == 1 else A

    def select(self, i, S, Q, tape):
        mean, L = linear_posterior_batch(self.prior, self.sigma, self.A, S, Q.astype(float))
        d = self.prior.d
        nu = mean + np.einsum("bij,bj->bi", L, tape["z"][:, :d])
        return np.argmax(nu @ self.A.T, axis=1)


class LinearUCBPolicy(BatchPolicy):
    name = "ucb-lin"

    def __init__(self, n, actions, lambda_reg: float = 0.1):
        A = np.asarray(actions, dtype=float)
        if A.ndim == 2:
            if A.shape[1] != 1:
                raise UnsupportedDimensionError("linear UCB is implemented for a scalar parameter (d = 1) only")
            A = A[:, 0]
        self.A, self.n, self.lam = A, n, float(lambda_reg)
        self.param = self.lam

    def reset(self, B):
        super().reset(B)
        self.V = np.full(B, self.lam)
        self.W = np.zeros(B)

    def select(self, i, S, Q, tape):
        beta = ucb_linear_beta(i, self.n, self.lam)
        nu_hat = self.W / self.V
        idx = self.A[None] * nu_hat[:, None] + beta * np.sqrt(self.A[None] ** 2 / self.V[:, None])
        return np.argmax(idx, axis=1)

    def observe(self, arms, rewards):
        x = self.A[arms]
        self.V += x * x
        self.W += x * rewards


class DPPolicy(BatchPolicy):
    """Play the stored Bayes-optimal action of a backward-induction table."""

    name = "dp"

    def __init__(self, table):
        self.table = table

    def select(self, i, S, Q, tape):
        t = self.table
        A = t.rounds[i][1]
        Ks = t.K_state
        m = np.rint(t.reward_units(S[:, :Ks])).astype(np.int64) - t.m_min(i)
        if t.one_armed:
            return A[m[:, 0], Q[:, 0]].astype(np.int64)
        idx = tuple(m.T) + tuple(Q[:, :Ks - 1].T)
        return A[idx].astype(np.int64)


class UniformPolicy(BatchPolicy):
    """Uniformly random arm; a reference point for regret sweeps."""

    name = "uniform"

    def select(self, i, S, Q, tape):
        K = S.shape[1]
        return np.minimum((tape["u"] * K).astype(np.int64), K - 1)
