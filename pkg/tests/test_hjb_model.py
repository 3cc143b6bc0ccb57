import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayes_hjb.bandit_core import (PM_GAMMA, ZERO_ONE, BetaParams, HistoryState, NormalParams,
                                   posterior_bernoulli, posterior_mean_var_bernoulli, posterior_normal)
from bayes_hjb.errors import DivergentScalingError
from bayes_hjb.hjb_model import (LINEAR_N, SQRT_N, PowerSeq, ScalingFactor, bernoulli_limit, binomial_prior_sequences,
                                 const, linear_limit, normal_limit, probe_limit, ratio_model, rescale_state, unrescale_state)

SQRT = ScalingFactor(SQRT_N)
LIN = ScalingFactor(LINEAR_N)


# -- frozen examples ---------------------------------------------------------

def test_scaling_factor_values_and_aliases():
    assert SQRT(16) == 4.0 and LIN(16) == 16.0
    assert ScalingFactor("sqrt").family == SQRT_N
    assert ScalingFactor(ScalingFactor("linear")).family == LINEAR_N
    with pytest.raises(ValueError):
        ScalingFactor("cube")


def test_bernoulli_limit_half_half_linear_scaling():
    m = bernoulli_limit(PowerSeq(c_n=0.5), PowerSeq(c_n=0.5), 1.0, LIN)
    assert m.alpha_hat[0] == pytest.approx(0.0, abs=1e-12)
    assert m.beta_hat[0] == pytest.approx(1.0, rel=1e-9)
    assert m.deterministic
    assert m.drift([[0.3]], [[0.5]])[0, 0] == pytest.approx(0.3 / 1.5, rel=1e-9)


def test_bernoulli_limit_one_armed_sqrt_setup():
    m = bernoulli_limit(PowerSeq(c_n=1), PowerSeq(c_n=1, c_sqrt=-1), 1.0, SQRT)
    assert m.alpha_hat[0] == pytest.approx(1.0, rel=1e-9)
    assert m.beta_hat[0] == pytest.approx(2.0, rel=1e-9)
    assert m.sigma_hat[0] == pytest.approx(1.0, rel=1e-9)
    assert not m.deterministic


def test_bernoulli_limit_half_half_sqrt_scaling():
    m = bernoulli_limit(PowerSeq(c_n=0.5), PowerSeq(c_n=0.5), 1.0, SQRT)
    assert m.alpha_hat[0] == pytest.approx(0.0, abs=1e-12)
    assert m.beta_hat[0] == pytest.approx(1.0, rel=1e-9)
    assert m.sigma_hat[0] == pytest.approx(1.0, rel=1e-9)


def test_zero_one_rewards_need_linear_scaling():
    with pytest.raises(DivergentScalingError):
        bernoulli_limit(PowerSeq(c_n=0.5), PowerSeq(c_n=0.5), 1.0, SQRT, support=ZERO_ONE)
    m = bernoulli_limit(PowerSeq(c_n=0.5), PowerSeq(c_n=0.5), 1.0, LIN, support=ZERO_ONE, fixed=(const(0.6),))
    assert m.alpha_hat[0] == pytest.approx(0.5) and m.beta_hat[0] == pytest.approx(1.0)
    assert m.constant == pytest.approx((0.6,))
    assert m.deterministic


def test_divergent_limit_is_refused():
    with pytest.raises(DivergentScalingError):
        bernoulli_limit(PowerSeq(c_n=1), PowerSeq(c_n=0.5), 1.0, SQRT)


@pytest.mark.parametrize("mean,var,a_hat,b_hat", [
    (PowerSeq(c_isqrt=1), PowerSeq(c_inv=1), 1.0, 1.0),
    (const(0.0), PowerSeq(c_inv=1), 0.0, 1.0),
    (const(0.0), const(2.0), 0.0, 0.0),
])
def test_normal_limit_examples(mean, var, a_hat, b_hat):
    m = normal_limit(mean, var, 1.0, SQRT, K=3)
    assert np.allclose(m.alpha_hat, a_hat, atol=1e-9)
    assert np.allclose(m.beta_hat, b_hat, atol=1e-9)
    assert m.sigma_hat == pytest.approx((1.0,) * 3)


def test_normal_limit_singular_drift_is_clamped_with_warning():
    m = normal_limit(const(0.0), const(2.0), 1.0, SQRT)
    with pytest.warns(RuntimeWarning):
        mu = m.drift([[0.5]], [[0.0]])
    assert np.isfinite(mu).all()


def test_linear_limit_examples():
    m = linear_limit(const(0.0), PowerSeq(c_inv=1), 1.0, SQRT, [1.0])
    assert m.prec_hat[0, 0] == pytest.approx(1.0, rel=1e-9)
    assert m.drift([[0.0]], [[0.7]])[0, 0] == 0.0
    assert m.drift([[1.0]], [[1.0]])[0, 0] == pytest.approx(0.5, rel=1e-9)
    m2 = linear_limit(const(0.0), PowerSeq(c_inv=1), 1.0, SQRT, np.eye(2))
    assert np.allclose(m2.prec_hat, np.eye(2), atol=1e-9)


@pytest.mark.parametrize("n", [4, 64, 1000])
def test_rescale_state_examples(n):
    t, s, q = rescale_state(1, HistoryState.initial(1), n, LIN)
    assert t == 0 and s[0] == 0 and q[0] == 0
    h = HistoryState(np.array([n / 4]), np.array([n // 2]), 1)
    t, s, q = rescale_state(n // 2 + 1, h, n, LIN)
    assert (t, s[0], q[0]) == (0.5, 0.25, 0.5)
    h = HistoryState(np.array([1.0, -2.0]), np.array([n - 3, 3]), 1)
    t, s, q = rescale_state(n + 1, h, n, SQRT)
    assert t == 1.0 and q.sum() == pytest.approx(1.0, abs=1e-15)


def test_probe_limit_extrapolates_power_sequences():
    est = probe_limit(lambda n: 2.0 + 3.0 / np.sqrt(n) - 5.0 / n, 1e7)
    assert est == pytest.approx(2.0, abs=1e-12)


# -- properties ----------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(0.1, 3), s=st.floats(-3, 3), q=st.floats(0, 1),
       pi=st.floats(0, 1), delta=st.floats(1e-6, 1))
def test_ratio_drift_conservation(a, b, s, q, pi, delta):
    m = ratio_model([a], [b], 1.0)
    mu = m.drift([s], [q])[0]
    s2 = s + mu * pi * delta
    q2 = q + pi * delta
    mu2 = m.drift([s2], [q2])[0]
    assert abs(mu2 - mu) <= 1e-12 * max(1.0, abs(mu))


def _dp_drift_pm(n, s_hat, q_hat):
    a, b = n, n - math.sqrt(n)
    f = math.sqrt(n)
    post = posterior_bernoulli(BetaParams(a, b), 1.0, f * s_hat, n * q_hat, support=PM_GAMMA)
    mean, _ = posterior_mean_var_bernoulli(post, 1.0)
    return n * mean / f


def _dp_drift_normal(n, s_hat, q_hat):
    f = math.sqrt(n)
    post = posterior_normal(NormalParams(1 / math.sqrt(n), 1 / n), 1.0, f * s_hat, n * q_hat)
    return n * post.mean / f


@pytest.mark.parametrize("pre_limit,model", [
    (_dp_drift_pm, bernoulli_limit(PowerSeq(c_n=1), PowerSeq(c_n=1, c_sqrt=-1), 1.0, SQRT)),
    (_dp_drift_normal, normal_limit(PowerSeq(c_isqrt=1), PowerSeq(c_inv=1), 1.0, SQRT)),
])
def test_pre_limit_drift_converges(pre_limit, model):
    rng = np.random.default_rng(5)
    for s_hat, q_hat in zip(rng.uniform(-1, 1, 20), rng.uniform(0, 1, 20)):
        limit = model.drift([s_hat], [q_hat])[0]
        e3 = abs(pre_limit(1e3, s_hat, q_hat) - limit) / max(1.0, abs(limit))
        e4 = abs(pre_limit(1e4, s_hat, q_hat) - limit) / max(1.0, abs(limit))
        assert e4 < 2 * e3 + 1e-6


def test_linear_drift_reduces_to_normal_drift():
    lin = linear_limit(PowerSeq(c_isqrt=1), PowerSeq(c_inv=1), 1.0, SQRT, [1.0])
    nor = normal_limit(PowerSeq(c_isqrt=1), PowerSeq(c_inv=1), 1.0, SQRT)
    rng = np.random.default_rng(3)
    s = rng.uniform(-3, 3, (100, 1))
    q = rng.uniform(0, 1, (100, 1))
    assert np.allclose(lin.drift(s, q), nor.drift(s, q), rtol=1e-10, atol=1e-10)


def test_linear_drift_matches_explicit_solve_in_two_dimensions():
    A = np.array([[1.0, 0.0], [0.6, 0.8], [-0.3, 0.5]])
    m = linear_limit(PowerSeq(c_isqrt=0.1), PowerSeq(c_inv=2), 1.0, SQRT, A)
    s = np.array([0.4, -0.2, 0.1])
    q = np.array([0.2, 0.3, 0.1])
    M = m.prec_hat + sum(qk * np.outer(a, a) for qk, a in zip(q, A))
    expect = A @ np.linalg.solve(M, m.alpha_hat + A.T @ s)
    assert np.allclose(m.drift(s, q), expect, rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 5000), data=st.data(), fam=st.sampled_from([SQRT_N, LINEAR_N]))
def test_rescale_round_trip(n, data, fam):
    f = ScalingFactor(fam)
    i = data.draw(st.integers(1, n + 1))
    q = np.array(data.draw(st.lists(st.integers(0, n), min_size=2, max_size=2)))
    s = np.array(data.draw(st.lists(st.integers(-n, n), min_size=2, max_size=2)), dtype=float)
    t, s_hat, q_hat = rescale_state(i, HistoryState(s, q, 1), n, f)
    i2, s2, q2 = unrescale_state(t, s_hat, q_hat, n, f)
    assert i2 == i and np.array_equal(s2, s) and np.array_equal(q2, q)


def test_diffusion_nonnegative_and_flag_consistent():
    rng = np.random.default_rng(0)
    s = rng.uniform(-4, 4, (1000, 2))
    q = rng.uniform(0, 1, (1000, 2))
    for m in (ratio_model([0, 1], [1, 2], [0.0, 0.0]), ratio_model([0, 1], [1, 2], [1.0, 0.5])):
        sig = m.diffusion(s, q)
        assert np.all(sig >= 0)
        assert m.deterministic == bool(np.all(sig < 1e-12))


def test_binomial_prior_sequences_balanced_and_literal():
    a, b = binomial_prior_sequences(1.0, 0.3)
    assert (a(100.0), b(100.0)) == pytest.approx((103.0, 97.0))
    m = bernoulli_limit(a, b, 0.5, ScalingFactor(SQRT_N))
    assert m.alpha_hat[0] == pytest.approx(0.3, rel=1e-4) and m.beta_hat[0] == pytest.approx(2.0, rel=1e-4)
    a, b = binomial_prior_sequences(1.0, 0.3, balanced=False)
    assert b(100.0) == pytest.approx(-2.0)
    with pytest.raises(DivergentScalingError):
        bernoulli_limit(a, b, 0.5, ScalingFactor(SQRT_N))
