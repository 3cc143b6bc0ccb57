"""Limiting drift/diffusion models and the discrete <-> continuous rescaling.

A horizon-n bandit history (round i, cumulative rewards s, pull counts q) maps
to continuous coordinates

    t = (i - 1) / n,    s_hat = s / f(n),    q_hat = q / n,

and the rescaled value v = w / f(n) solves an HJB equation whose per-arm drift
and diffusion are the n -> infinity limits of the rescaled posterior moments.
For the conjugate families these limits reduce to a handful of constants
(alpha_hat, beta_hat, sigma_hat) computed here from user-supplied prior
sequences.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bandit_core import PM_GAMMA, ZERO_ONE, HistoryState
from .errors import DivergentScalingError, NumericError

EPS_Q = 1e-9

SQRT_N = "sqrt_n"
LINEAR_N = "linear_n"


@dataclass(frozen=True)
class ScalingFactor:
    family: str

    def __post_init__(self):
        aliases = {"sqrt": SQRT_N, "linear": LINEAR_N, "n": LINEAR_N}
        fam = self.family.family if isinstance(self.family, ScalingFactor) else self.family
        fam = aliases.get(fam, fam)
        if fam not in (SQRT_N, LINEAR_N):
            raise ValueError(f"scaling family must be sqrt_n or linear_n, got {self.family!r}")
        object.__setattr__(self, "family", fam)

    def __call__(self, n):
        return np.sqrt(n) if self.family == SQRT_N else n * 1.0

    @property
    def short(self) -> str:
        return "sqrt" if self.family == SQRT_N else "linear"


class PowerSeq:
    """Sequence c_n*n + c_sqrt*sqrt(n) + c_1 + c_isqrt/sqrt(n) + c_inv/n."""

    POWERS = {"c_n": 1.0, "c_sqrt": 0.5, "c_1": 0.0, "c_isqrt": -0.5, "c_inv": -1.0}

    def __init__(self, **coefs):
        unknown = set(coefs) - set(self.POWERS)
        if unknown:
            raise ValueError(f"unknown sequence terms {sorted(unknown)}")
        self.coefs = {k: float(v) for k, v in coefs.items() if v}

    def __call__(self, n):
        return sum((c * n ** self.POWERS[k] for k, c in self.coefs.items()), 0.0 * n)

    def __repr__(self):
        terms = ", ".join(f"{k}={v:g}" for k, v in self.coefs.items())
        return f"PowerSeq({terms})"


def const(x) -> Callable:
    return lambda n: x + 0.0 * n


def _as_seq(x) -> Callable:
    return x if callable(x) else const(float(x))


def probe_limit(expr: Callable[[float], np.ndarray], n_probe: float, what: str = "limit"):
    """Numerical limit of ``expr(n)`` as n -> infinity.

    Convergence is declared when the values at n_probe and 4*n_probe agree to
    1e-3 relative.  The returned estimate extrapolates the three values at
    n_probe, 4*n_probe and 16*n_probe as a quadratic in n^(-1/2), which is
    exact for sequences built from powers n^0, n^(-1/2), n^(-1).
    """
    a = np.asarray(expr(float(n_probe)), dtype=float)
    b = np.asarray(expr(4.0 * n_probe), dtype=float)
    c = np.asarray(expr(16.0 * n_probe), dtype=float)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))) or np.any(np.abs(a - b) > 1e-3 * scale):
        raise DivergentScalingError(
            f"{what} does not settle: {a} at n={n_probe:g} vs {b} at n={4 * n_probe:g}; "
            "the scaling factor f(n) must match the order of the cumulative reward "
            "(for Bernoulli rewards only f(n) ~ n gives a finite drift)"
        )
    est = a / 3.0 - 2.0 * b + 8.0 * c / 3.0
    est = np.where(np.abs(est) < 1e-12, 0.0, est)
    return float(est) if est.ndim == 0 else est


@dataclass(frozen=True)
class LimitModel:
    """Limiting HJB coefficients for K arms.

    The first ``K_state`` arms carry state (s_hat_k, q_hat_k); the remaining
    ``constant`` arms have a fixed drift and no state (the known arm of the
    one-armed problem).  ``kind`` is ``"ratio"`` for the unstructured
    families, whose drift is (alpha_hat_k + s_hat_k) / (beta_hat_k + q_hat_k),
    or ``"linear"`` for the structured linear bandit.
    """

    kind: str
    sigma_hat: tuple
    alpha_hat: np.ndarray = None
    beta_hat: np.ndarray = None
    constant: tuple = ()
    actions: np.ndarray = None
    prec_hat: np.ndarray = None
    reward_rate: Optional[tuple] = None
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sigma_hat", tuple(float(x) for x in self.sigma_hat))
        object.__setattr__(self, "constant", tuple(float(x) for x in self.constant))
        if any(x < 0 for x in self.sigma_hat):
            raise ValueError("diffusion must be non-negative")
        if self.kind == "ratio":
            a = np.asarray(self.alpha_hat, dtype=float)
            b = np.asarray(self.beta_hat, dtype=float)
            object.__setattr__(self, "alpha_hat", a)
            object.__setattr__(self, "beta_hat", b)
            if a.shape != (self.K_state,) or b.shape != (self.K_state,):
                raise ValueError("alpha_hat/beta_hat must have one entry per state arm")
            if np.any(b < 0):
                raise ValueError("beta_hat must be non-negative")
        elif self.kind == "linear":
            A = np.atleast_2d(np.asarray(self.actions, dtype=float))
            object.__setattr__(self, "actions", A)
            object.__setattr__(self, "alpha_hat", np.atleast_1d(np.asarray(self.alpha_hat, float)))
            object.__setattr__(self, "prec_hat", np.atleast_2d(np.asarray(self.prec_hat, float)))
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def K_state(self) -> int:
        return len(self.sigma_hat)

    @property
    def K(self) -> int:
        return self.K_state + len(self.constant)

    @property
    def deterministic(self) -> bool:
        return all(x < 1e-12 for x in self.sigma_hat)

    def drift(self, s_hat, q_hat) -> np.ndarray:
        """Drift of each state arm; ``s_hat``, ``q_hat`` have shape (..., K_state)."""
        s_hat = np.asarray(s_hat, dtype=float)
        q_hat = np.asarray(q_hat, dtype=float)
        if self.kind == "ratio":
            den = self.beta_hat + q_hat
            if np.any(den < EPS_Q):
                warnings.warn("drift denominator below 1e-9 (beta_hat = 0 at q_hat = 0); clamped",
                              RuntimeWarning, stacklevel=2)
                den = np.maximum(den, EPS_Q)
            return (self.alpha_hat + s_hat) / den
        A = self.actions
        rhs = self.alpha_hat + s_hat @ A
        if A.shape[1] == 1:
            den = self.prec_hat[0, 0] + q_hat @ (A[:, 0] ** 2)
            if np.any(np.abs(den) < EPS_Q):
                raise NumericError("singular drift system; prior precision limit is zero at q_hat = 0")
            return (rhs[..., 0] / den)[..., None] * A[:, 0]
        M = self.prec_hat + np.einsum("...k,ki,kj->...ij", q_hat, A, A)
        try:
            x = np.linalg.solve(M, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular drift system; prior precision limit is zero at q_hat = 0") from exc
        return x @ A.T

    def arm_drift(self, k: int, s_k, q_k) -> np.ndarray:
        """Drift of ratio-form arm k from its own coordinates only (any broadcastable shapes)."""
        if self.kind != "ratio":
            raise ValueError("per-arm drift is only defined for the ratio form")
        den = self.beta_hat[k] + np.asarray(q_k, dtype=float)
        if np.any(den < EPS_Q):
            warnings.warn("drift denominator below 1e-9 (beta_hat = 0 at q_hat = 0); clamped",
                          RuntimeWarning, stacklevel=2)
            den = np.maximum(den, EPS_Q)
        return (self.alpha_hat[k] + np.asarray(s_k, dtype=float)) / den

    def diffusion(self, s_hat, q_hat) -> np.ndarray:
        shape = np.broadcast(np.asarray(s_hat), np.asarray(q_hat)).shape
        return np.broadcast_to(np.asarray(self.sigma_hat), shape).copy()

    def reachable(self, s_hat, q_hat) -> np.ndarray:
        """Mask of states reachable from the origin, where that is known.

        With bounded rewards and f(n) = n a pull moves s_hat by at most the
        rescaled reward magnitude, so s_hat_k / q_hat_k lies in the reward
        range.  Without that information every state counts as reachable.
        """
        s_hat = np.asarray(s_hat, dtype=float)
        q_hat = np.asarray(q_hat, dtype=float)
        if self.reward_rate is None:
            return np.ones(np.broadcast(s_hat, q_hat).shape[:-1], dtype=bool)
        lo, hi = self.reward_rate
        tol = 1e-12
        ok = (s_hat >= lo * q_hat - tol) & (s_hat <= hi * q_hat + tol)
        return np.all(ok, axis=-1)

    def arm_reachable(self, s_k, q_k) -> np.ndarray:
        s_k = np.asarray(s_k, dtype=float)
        q_k = np.asarray(q_k, dtype=float)
        shape = np.broadcast(s_k, q_k).shape
        if self.reward_rate is None:
            return np.ones(shape, dtype=bool)
        lo, hi = self.reward_rate
        return (s_k >= lo * q_k - 1e-12) & (s_k <= hi * q_k + 1e-12)


def ratio_model(alpha_hat, beta_hat, sigma_hat, constant=(), reward_rate=None, **hyper) -> LimitModel:
    """Unstructured model with drift (alpha_hat + s) / (beta_hat + q)."""
    alpha_hat = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    beta_hat = np.broadcast_to(np.asarray(beta_hat, dtype=float), alpha_hat.shape)
    sig = np.broadcast_to(np.asarray(sigma_hat, dtype=float), alpha_hat.shape)
    return LimitModel("ratio", tuple(sig), alpha_hat, beta_hat.copy(), tuple(constant),
                      reward_rate=reward_rate, hyper=dict(hyper))


def _per_arm(x, K):
    if callable(x) or np.isscalar(x):
        return [_as_seq(x)] * K
    x = list(x)
    if len(x) != K:
        raise ValueError(f"expected {K} per-arm sequences, got {len(x)}")
    return [_as_seq(v) for v in x]


def _constant_limits(fixed, f, n_probe):
    return tuple(probe_limit(lambda n, m=_as_seq(m): n * m(n) / f(n), n_probe, "constant arm drift")
                 for m in fixed)


def binomial_prior_sequences(c1: float, c2: float, balanced: bool = True):
    """Beta hyperparameter sequences (c1 n + c2 sqrt(n), c1 n - c2 sqrt(n)).

    ``balanced=False`` gives the literal variant (c1 n + c2 sqrt(n), c1 - c2 sqrt(n)),
    whose beta turns negative for large n and has no sqrt(n)-scale limit.
    """
    alpha = PowerSeq(c_n=c1, c_sqrt=c2)
    beta = PowerSeq(c_n=c1, c_sqrt=-c2) if balanced else PowerSeq(c_1=c1, c_sqrt=-c2)
    return alpha, beta


def bernoulli_limit(alpha_n, beta_n, gamma_n, f: ScalingFactor, n_probe: float = 1e6, K: int = 1,
                    support: str = PM_GAMMA, fixed=()) -> LimitModel:
    """Limit model of Bernoulli arms with Beta(alpha(n), beta(n)) priors.

    For +/-gamma rewards: alpha_hat = lim gamma (alpha - beta) / f,
    beta_hat = lim (alpha + beta) / n, sigma_hat = lim sqrt(n) gamma / f.
    For {0, 1} rewards the drift is (alpha/f + s_hat) / ((alpha + beta)/n + q_hat)
    and only f(n) = n gives a finite, deterministic limit.
    ``fixed`` holds deterministic arm means mu(n); their drift is lim n mu / f.
    """
    alphas, betas = _per_arm(alpha_n, K), _per_arm(beta_n, K)
    gamma = _as_seq(gamma_n)
    a_hat, b_hat = [], []
    for k, (a, b) in enumerate(zip(alphas, betas)):
        if support == PM_GAMMA:
            a_hat.append(probe_limit(lambda n: gamma(n) * (a(n) - b(n)) / f(n), n_probe, f"alpha_hat[{k}]"))
        else:
            a_hat.append(probe_limit(lambda n: a(n) / f(n), n_probe, f"alpha_hat[{k}]"))
        b_hat.append(probe_limit(lambda n: (a(n) + b(n)) / n, n_probe, f"beta_hat[{k}]"))
    rate = probe_limit(lambda n: gamma(n) * n / f(n), n_probe, "reward scale") if f.family == LINEAR_N else None
    if support == PM_GAMMA:
        sig = probe_limit(lambda n: np.sqrt(n) * gamma(n) / f(n), n_probe, "sigma_hat")
        reward_rate = (-rate, rate) if rate is not None else None
    elif support == ZERO_ONE:
        if f.family != LINEAR_N:
            raise DivergentScalingError("{0,1} rewards need f(n) = n; sqrt(n) scaling has no finite drift")
        sig = 0.0
        reward_rate = (0.0, 1.0)
    else:
        raise ValueError(f"unknown support {support!r}")
    return ratio_model(a_hat, b_hat, sig, _constant_limits(fixed, f, n_probe), reward_rate=reward_rate,
                       family="bernoulli", support=support, scaling=f.family)


def normal_limit(mean_n, var_n, sigma_n, f: ScalingFactor, n_probe: float = 1e6, K: int = 1,
                 fixed=()) -> LimitModel:
    """Limit model of normal arms with N(mean(n), var(n)) priors and noise sd sigma(n).

    alpha_hat = lim sigma^2 mean / (f var), beta_hat = lim sigma^2 / (var n),
    sigma_hat = lim sqrt(n) sigma / f.
    """
    means, vars_ = _per_arm(mean_n, K), _per_arm(var_n, K)
    sigma = _as_seq(sigma_n)
    a_hat = [probe_limit(lambda n: sigma(n) ** 2 * m(n) / (f(n) * v(n)), n_probe, f"alpha_hat[{k}]")
             for k, (m, v) in enumerate(zip(means, vars_))]
    b_hat = [probe_limit(lambda n: sigma(n) ** 2 / (v(n) * n), n_probe, f"beta_hat[{k}]")
             for k, v in enumerate(vars_)]
    sig = probe_limit(lambda n: np.sqrt(n) * sigma(n) / f(n), n_probe, "sigma_hat")
    return ratio_model(a_hat, b_hat, sig, _constant_limits(fixed, f, n_probe),
                       family="normal", scaling=f.family)


def linear_limit(mean_n, cov_n, sigma_n, f: ScalingFactor, actions, n_probe: float = 1e6) -> LimitModel:
    """Limit model of the linear-normal bandit with prior N(mean(n), cov(n)).

    prec_hat = lim sigma^2 cov^{-1} / n, alpha_hat = lim sigma^2 cov^{-1} mean / f,
    sigma_hat = lim sqrt(n) sigma / f.  ``mean_n`` and ``cov_n`` map n to a
    d-vector and a d x d matrix; a scalar-valued ``cov_n`` means cov(n) I.
    """
    A = np.asarray(actions, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    d = A.shape[1]
    sigma = _as_seq(sigma_n)

    def mean(n):
        m = np.asarray(mean_n(n) if callable(mean_n) else mean_n, dtype=float)
        return np.broadcast_to(m, (d,))

    def cov(n):
        c = np.asarray(cov_n(n) if callable(cov_n) else cov_n, dtype=float)
        return c * np.eye(d) if c.ndim == 0 else c

    def prec(n):
        return np.linalg.solve(cov(n), np.eye(d))

    prec_hat = probe_limit(lambda n: sigma(n) ** 2 * prec(n) / n, n_probe, "prior precision limit")
    a_hat = probe_limit(lambda n: sigma(n) ** 2 * np.linalg.solve(cov(n), mean(n)) / f(n), n_probe,
                        "alpha_hat")
    sig = probe_limit(lambda n: np.sqrt(n) * sigma(n) / f(n), n_probe, "sigma_hat")
    prec_hat = np.atleast_2d(prec_hat)
    hyper = {"family": "linear", "scaling": f.family}
    if np.linalg.matrix_rank(prec_hat) < d:
        warnings.warn("prior precision limit is singular; adding 1e-9 I so the drift stays finite at q_hat = 0",
                      RuntimeWarning, stacklevel=2)
        prec_hat = prec_hat + EPS_Q * np.eye(d)
        hyper["regularized"] = True
    return LimitModel("linear", (sig,) * A.shape[0], alpha_hat=np.atleast_1d(a_hat), actions=A,
                      prec_hat=prec_hat, hyper=hyper)


def rescale_state(i: int, h: HistoryState, n: int, f: ScalingFactor):
    if not 1 <= i <= n + 1:
        raise ValueError(f"round {i} outside 1..{n + 1}")
    return (i - 1) / n, h.s / f(n), h.q / n


def unrescale_state(t: float, s_hat, q_hat, n: int, f: ScalingFactor):
    """Inverse of :func:`rescale_state`; integers survive the round trip exactly."""
    i = int(round(t * n)) + 1
    q = np.rint(np.asarray(q_hat) * n).astype(np.int64)
    s = np.asarray(s_hat, dtype=float) * f(n)
    near = np.abs(s - np.rint(s)) <= 1e-9 * np.maximum(1.0, np.abs(s))
    s = np.where(near, np.rint(s), s)
    return i, s, q
