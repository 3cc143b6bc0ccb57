"""Bandit environments, reward sampling and conjugate posterior updates.

Three families are covered: Bernoulli arms (rewards in {0, 1} or {-gamma, +gamma}),
independent normal arms, and a linear-normal bandit whose arm means are
inner products of fixed action vectors with an unknown parameter.

Posterior helpers only use elementwise arithmetic, so ``s`` and ``q`` may be
scalars or numpy arrays of matching shape.  The harness relies on this to
update a whole batch of episodes at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import linalg

from .errors import InvalidHistoryError, NumericError

ZERO_ONE = "zero-one"
PM_GAMMA = "pm-gamma"
SUPPORTS = (ZERO_ONE, PM_GAMMA)

MAX_LINEAR_DIM = 8


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HistoryState:
    """Per-arm cumulative reward ``s`` and pull count ``q`` at the start of ``round``."""

    s: np.ndarray
    q: np.ndarray
    round: int = 1

    def __post_init__(self):
        s = _frozen(self.s, float)
        q = _frozen(self.q, np.int64)
        if s.ndim != 1 or s.shape != q.shape:
            raise ValueError("s and q must be 1-d vectors of equal length")
        if np.any(q < 0):
            raise ValueError("pull counts must be non-negative")
        if self.round < 1:
            raise ValueError("round index starts at 1")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "q", q)

    @classmethod
    def initial(cls, K: int) -> "HistoryState":
        return cls(np.zeros(K), np.zeros(K, dtype=np.int64), 1)

    @property
    def K(self) -> int:
        return len(self.s)


def apply_step(h: HistoryState, arm: int, reward: float) -> HistoryState:
    if not 0 <= arm < h.K:
        raise IndexError(f"arm {arm} out of range for K={h.K}")
    s = h.s.copy()
    q = h.q.copy()
    s[arm] += reward
    q[arm] += 1
    return HistoryState(s, q, h.round + 1)


# --------------------------------------------------------------------------
# environments


@dataclass(frozen=True)
class BernoulliEnvSpec:
    """Bernoulli arms with success probabilities ``nu``.

    ``fixed`` lists deterministic arms appended after the Bernoulli ones; the
    one-armed problem is ``BernoulliEnvSpec(nu=(p,), fixed=(mu2,))``.
    """

    nu: tuple
    gamma: float = 1.0
    support: str = ZERO_ONE
    fixed: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(x) for x in self.nu))
        object.__setattr__(self, "fixed", tuple(float(x) for x in self.fixed))
        if any(not 0.0 <= x <= 1.0 for x in self.nu):
            raise ValueError("success probabilities must lie in [0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.support not in SUPPORTS:
            raise ValueError(f"support must be one of {SUPPORTS}")

    family = "bernoulli"

    @property
    def K(self) -> int:
        return len(self.nu) + len(self.fixed)

    def means(self) -> np.ndarray:
        nu = np.asarray(self.nu)
        if self.support == ZERO_ONE:
            m = nu
        else:
            m = self.gamma * (2.0 * nu - 1.0)
        return np.concatenate([m, np.asarray(self.fixed, dtype=float)])


@dataclass(frozen=True)
class NormalEnvSpec:
    nu: tuple
    sigma: float = 1.0

    family = "normal"

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(x) for x in self.nu))
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def K(self) -> int:
        return len(self.nu)

    def means(self) -> np.ndarray:
        return np.asarray(self.nu, dtype=float)


@dataclass(frozen=True)
class LinearEnvSpec:
    nu: np.ndarray
    actions: np.ndarray
    sigma: float = 1.0

    family = "linear"

    def __post_init__(self):
        nu = _frozen(np.atleast_1d(np.asarray(self.nu, dtype=float)), float)
        actions = np.asarray(self.actions, dtype=float)
        if actions.ndim == 1:
            actions = actions[:, None]
        actions = _frozen(actions, float)
        if actions.shape[1] != nu.shape[0]:
            raise ValueError("action vectors must have the dimension of nu")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "actions", actions)

    @property
    def K(self) -> int:
        return self.actions.shape[0]

    @property
    def d(self) -> int:
        return self.actions.shape[1]

    def means(self) -> np.ndarray:
        return self.actions @ self.nu


EnvSpec = Union[BernoulliEnvSpec, NormalEnvSpec, LinearEnvSpec]


def reward_from_noise(env: EnvSpec, arm, noise):
    """Map a pre-drawn noise value to a reward.

    Bernoulli arms consume a uniform draw, normal and linear arms a standard
    normal one.  ``arm`` and ``noise`` may be arrays (one entry per episode).
    """
    arm = np.asarray(arm)
    means = env.means()
    if env.family == "bernoulli":
        nb = len(env.nu)
        nu = np.asarray(env.nu + (0.0,) * len(env.fixed))
        hit = noise < nu[arm]
        if env.support == ZERO_ONE:
            r = hit.astype(float)
        else:
            r = np.where(hit, env.gamma, -env.gamma)
        return np.where(arm < nb, r, means[arm])
    return means[arm] + env.sigma * noise


def noise_kind(env: EnvSpec) -> str:
    return "uniform" if env.family == "bernoulli" else "normal"


def sample_reward(env: EnvSpec, arm: int, rng: np.random.Generator) -> float:
    if not 0 <= arm < env.K:
        raise IndexError(f"arm {arm} out of range for K={env.K}")
    z = rng.random() if noise_kind(env) == "uniform" else rng.standard_normal()
    return float(reward_from_noise(env, arm, z))


def episode_streams(seed: int, episode: int):
    """Independent (reward, policy) generators for one episode.

    Streams are keyed by ``(seed, episode)`` through Philox, a counter-based
    generator, so any episode can be replayed in isolation and the result does
    not depend on the order in which episodes are run.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(episode)])
    rs, ps = ss.spawn(2)
    return np.random.Generator(np.random.Philox(rs)), np.random.Generator(np.random.Philox(ps))


# --------------------------------------------------------------------------
# conjugate posteriors


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if np.any(np.asarray(self.alpha) <= 0) or np.any(np.asarray(self.beta) <= 0):
            raise ValueError("Beta parameters must be positive")


@dataclass(frozen=True)
class NormalParams:
    mean: float
    variance: float

    def __post_init__(self):
        if np.any(np.asarray(self.variance) <= 0):
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class GaussianVecParams:
    mean: np.ndarray
    covariance: np.ndarray
    _chol: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(np.asarray(self.mean, dtype=float)), float)
        cov = _frozen(np.atleast_2d(np.asarray(self.covariance, dtype=float)), float)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError("covariance must be d x d")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def chol(self) -> np.ndarray:
        return self._chol


def posterior_bernoulli(prior: BetaParams, gamma: float, s_k, q_k, support: str = PM_GAMMA,
                        arm=0) -> BetaParams:
    if support == PM_GAMMA:
        a = prior.alpha + s_k / (2 * gamma) + q_k / 2
        b = prior.beta - s_k / (2 * gamma) + q_k / 2
    elif support == ZERO_ONE:
        a = prior.alpha + s_k
        b = prior.beta + q_k - s_k
    else:
        raise ValueError(f"unknown support {support!r}")
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
        raise InvalidHistoryError(arm, f"history (s={s_k}, q={q_k}) leaves no valid Beta posterior")
    return BetaParams(a, b)


def posterior_mean_var_bernoulli(post: BetaParams, gamma: float):
    """Posterior mean and second moment of a +/-gamma reward."""
    mean = gamma * (2.0 * post.alpha / (post.alpha + post.beta) - 1.0)
    return mean, gamma * gamma


def posterior_normal(prior: NormalParams, sigma: float, s_k, q_k) -> NormalParams:
    if np.any(np.asarray(q_k) < 0):
        raise ValueError("pull counts must be non-negative")
    if np.ndim(q_k) == 0 and np.ndim(s_k) == 0 and q_k == 0 and s_k == 0:
        return prior
    prec = q_k * sigma ** -2 + 1.0 / prior.variance
    mean = (prior.mean / prior.variance + s_k * sigma ** -2) / prec
    return NormalParams(mean, 1.0 / prec)


def posterior_linear(prior: GaussianVecParams, sigma: float, actions, s, q) -> GaussianVecParams:
    actions = np.asarray(actions, dtype=float)
    if actions.ndim == 1:
        actions = actions[:, None]
    s = np.asarray(s, dtype=float)
    q = np.asarray(q, dtype=float)
    if not np.any(q) and not np.any(s):
        return prior
    d = prior.d
    if d > MAX_LINEAR_DIM:
        raise ValueError(f"dimension {d} exceeds cap {MAX_LINEAR_DIM}")
    if d == 1:
        # scalar path mirrors posterior_normal operation-for-operation
        var = prior.covariance[0, 0]
        a = actions[:, 0]
        prec = (q * a * a).sum() * sigma ** -2 + 1.0 / var
        mean = (prior.mean[0] / var + (s * a).sum() * sigma ** -2) / prec
        return GaussianVecParams([mean], [[1.0 / prec]])
    eye = np.eye(d)
    prior_prec = linalg.cho_solve((prior.chol, True), eye)
    prec = prior_prec + sigma ** -2 * (actions.T * q) @ actions
    rhs = prior_prec @ prior.mean + sigma ** -2 * actions.T @ s
    try:
        c = linalg.cho_factor(prec, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError("posterior precision is not positive definite") from exc
    cov = linalg.cho_solve(c, eye)
    cov = 0.5 * (cov + cov.T)
    return GaussianVecParams(linalg.cho_solve(c, rhs), cov)


def linear_posterior_batch(prior: GaussianVecParams, sigma: float, actions: np.ndarray,
                            S: np.ndarray, Q: np.ndarray):
    """Posterior means and covariance Cholesky factors for a batch of histories.

    ``S`` and ``Q`` have shape (B, K).  Returns ``(mean (B, d), chol (B, d, d))``.
    """
    d = prior.d
    eye = np.eye(d)
    prior_prec = linalg.cho_solve((prior.chol, True), eye)
    A = actions
    prec = prior_prec[None] + sigma ** -2 * np.einsum("bk,ki,kj->bij", Q, A, A)
    rhs = (prior_prec @ prior.mean)[None] + sigma ** -2 * S @ A
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericError("posterior precision is not positive definite") from exc
    mean = np.linalg.solve(prec, rhs[..., None])[..., 0]
    # covariance factor: prec^{-1} = L^{-T} L^{-1}; a draw is mean + L^{-T} z
    Linv = np.linalg.solve(L, np.broadcast_to(eye, prec.shape))
    return mean, np.swapaxes(Linv, -1, -2)
