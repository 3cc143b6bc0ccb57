"""Flat key=value configuration files.

One ``key=value`` per line, ``#`` starts a comment.  Sequences in n are given
either as a constant (``prior.mean=0.01``) or term by term as coefficients of
powers of n (``alpha.c_n=0.5``, ``prior.mean.c_isqrt=1``; terms c_n, c_sqrt,
c_1, c_isqrt, c_inv).  Lists are comma separated.

Model files (``solve-hjb``) use ``family`` = bernoulli | normal | linear | ratio:

    family=bernoulli            family=ratio
    K=1                         alpha_hat=0.5
    support=zero-one            beta_hat=1
    scaling=linear_n            sigma_hat=0
    alpha.c_n=0.5               constant=0.6
    beta.c_n=0.5
    fixed=0.6                   # known arms, constant means
    fixed.0.c_isqrt=0.333       # or term by term per arm

Bernoulli priors may instead be given as binomial.c1, binomial.c2 and
binomial.form = balanced (c1 n + c2 sqrt(n), c1 n - c2 sqrt(n)) | literal
(c1 n + c2 sqrt(n), c1 - c2 sqrt(n)).

Experiment files (``regret``) share the family/prior keys and add ``n``,
``sims``, ``params``, ``policies``, ``seed``, ``actions`` and friends; see
:func:`experiment_from_kv`.
"""
from __future__ import annotations

import re
from typing import Callable, Dict, Optional

import numpy as np

from .errors import ConfigError
from .hjb_model import (LimitModel, PowerSeq, ScalingFactor, bernoulli_limit, binomial_prior_sequences, const,
                        linear_limit, normal_limit, ratio_model)

_TERM = re.compile(r"^(?P<base>.+)\.(?P<term>c_n|c_sqrt|c_1|c_isqrt|c_inv)$")


def parse_kv(path) -> Dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            k, v = (x.strip() for x in line.split("=", 1))
            if not k:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if k in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {k!r}")
            out[k] = v
    return out


def _float(d, key, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    try:
        return float(d[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {d[key]!r}") from exc


def _int(d, key, default=None):
    v = _float(d, key, default)
    if v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {d[key]!r}")
    return int(v)


def _floats(d, key, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return tuple(default)
    try:
        return tuple(float(x) for x in d[key].split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {d[key]!r}") from exc


def get_seq(d, key, default: Optional[Callable] = None) -> Callable:
    """Sequence in n named ``key``: a constant value or per-term coefficients."""
    terms = {}
    for k, v in d.items():
        m = _TERM.match(k)
        if m and m.group("base") == key:
            try:
                terms[m.group("term")] = float(v)
            except ValueError as exc:
                raise ConfigError(f"{k}: not a number: {v!r}") from exc
    if key in d:
        if terms:
            raise ConfigError(f"{key} given both as a constant and term by term")
        return const(_float(d, key))
    if terms:
        return PowerSeq(**terms)
    if default is None:
        raise ConfigError(f"missing sequence {key!r} (give {key}=<value> or {key}.c_n=... terms)")
    return default


def _fixed_arms(d):
    if "fixed" in d:
        return tuple(const(x) for x in _floats(d, "fixed"))
    out = []
    k = 0
    while any(key.startswith(f"fixed.{k}.") for key in d):
        out.append(get_seq(d, f"fixed.{k}"))
        k += 1
    return tuple(out)


def _beta_sequences(d):
    """alpha / beta sequences, or the binomial pair from binomial.c1, binomial.c2 and binomial.form."""
    if "binomial.c1" not in d:
        return get_seq(d, "alpha"), get_seq(d, "beta")
    form = d.get("binomial.form", "balanced")
    if form not in ("balanced", "literal"):
        raise ConfigError(f"binomial.form must be balanced or literal, got {form!r}")
    return binomial_prior_sequences(_float(d, "binomial.c1"), _float(d, "binomial.c2", 0.0), form == "balanced")


def model_from_kv(d: Dict[str, str]) -> LimitModel:
    family = d.get("family", "")
    try:
        if family == "ratio":
            a = _floats(d, "alpha_hat")
            return ratio_model(a, _floats(d, "beta_hat"), _floats(d, "sigma_hat", (0.0,)),
                               _floats(d, "constant", ()), scaling=d.get("scaling"))
        f = ScalingFactor(d.get("scaling", "sqrt_n"))
        n_probe = _float(d, "n_probe", 1e6)
        if family == "bernoulli":
            alpha, beta = _beta_sequences(d)
            return bernoulli_limit(alpha, beta, get_seq(d, "gamma", const(1.0)), f,
                                   n_probe, K=_int(d, "K", 1), support=d.get("support", "pm-gamma"),
                                   fixed=_fixed_arms(d))
        if family == "normal":
            return normal_limit(get_seq(d, "prior.mean"), get_seq(d, "prior.var"), get_seq(d, "sigma", const(1.0)),
                                f, n_probe, K=_int(d, "K", 1), fixed=_fixed_arms(d))
        if family == "linear":
            return linear_limit(get_seq(d, "prior.mean"), get_seq(d, "prior.var"), get_seq(d, "sigma", const(1.0)),
                                f, np.asarray(_floats(d, "actions"))[:, None], n_probe)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown model family {family!r}")


def experiment_from_kv(d: Dict[str, str]):
    """Build an :class:`~bayes_hjb.harness.ExperimentConfig` from parsed keys.

    Keys: family, K, n, sims, seed, sigma, scaling, params, policies,
    prior.mean / prior.var (normal, linear), alpha / beta, support, gamma,
    nu (other Bernoulli arms), actions, grid.N, grid.S, lambda, ucb.delta,
    ucb_lin.lambda, batch, workers, out.
    """
    from .harness import ExperimentConfig

    defaults = ExperimentConfig.__dataclass_fields__
    kw = dict(
        family=d.get("family", "normal"),
        K=_int(d, "K", 5),
        n=_int(d, "n", 1000),
        sims=_int(d, "sims", 500),
        seed=_int(d, "seed", 0),
        sigma=_float(d, "sigma", 1.0),
        scaling=d.get("scaling", "sqrt_n"),
        params=_floats(d, "params", (0.0,)),
        support=d.get("support", "zero-one"),
        gamma=_float(d, "gamma", 1.0),
        other_nu=_floats(d, "nu", ()),
        grid_N=_int(d, "grid.N", 100),
        lam=_float(d, "lambda", 1.0),
        lin_lambda=_float(d, "ucb_lin.lambda", 0.1),
        batch=_int(d, "batch", 250),
        workers=_int(d, "workers", 1),
        out=d.get("out"),
    )
    if "policies" in d:
        kw["policies"] = tuple(x.strip() for x in d["policies"].split(",") if x.strip())
    if "actions" in d:
        kw["actions"] = _floats(d, "actions")
    if "grid.S" in d:
        kw["grid_S"] = _float(d, "grid.S")
    if "ucb.delta" in d:
        kw["ucb_delta"] = _float(d, "ucb.delta")
    for key, attr in (("prior.mean", "prior_mean"), ("prior.var", "prior_var"),
                      ("alpha", "prior_alpha"), ("beta", "prior_beta")):
        kw[attr] = get_seq(d, key, defaults[attr].default_factory())
    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
