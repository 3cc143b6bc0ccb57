import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayes_hjb.bandit_core import PM_GAMMA, BetaParams, GaussianVecParams, HistoryState, NormalParams
from bayes_hjb.errors import RequiresInitializationError, UnsupportedDimensionError
from bayes_hjb.hjb_model import LINEAR_N, ScalingFactor, ratio_model
from bayes_hjb.hjb_solver import GridSpec, solve
from bayes_hjb.policies import (ClosedFormPolicy, LinearThompsonPolicy, LinearUCBPolicy, LinUCBState, ThompsonPolicy,
                                UCBPolicy, UniformPolicy, exact_regularized, exact_unregularized, grid_policy,
                                is_distribution, sample_from, thompson_linear, thompson_unstructured, ucb_bonus,
                                ucb_linear, ucb_linear_beta, ucb_unstructured)


def H(s, q, i=1):
    return HistoryState(np.asarray(s, dtype=float), np.asarray(q), i)


# -- frozen examples ---------------------------------------------------------

def test_exact_unregularized_examples():
    w = exact_unregularized(H([5, 2], [50, 50]), 100, 10, [1, 1], [1, 1])
    assert w.tolist() == [1.0, 0.0]
    assert exact_unregularized(H([3, 3], [4, 4]), 100, 10, [1, 1], [1, 1]).tolist() == [1.0, 0.0]
    w = exact_unregularized(H([1, 3], [4, 5]), 100, 100, [0, 0], [0, 0])
    assert w.tolist() == [0.0, 1.0]


def test_exact_unregularized_needs_initialization():
    with pytest.raises(RequiresInitializationError):
        exact_unregularized(H([0, 0], [0, 3]), 10, 10, [0, 0], [0, 0])


def test_exact_regularized_examples():
    w = exact_regularized(H([2, 2, 2], [3, 3, 3]), 100, 10, [0, 0, 0], [1, 1, 1], 0.5)
    assert np.allclose(w, 1 / 3)
    w = exact_regularized(H([5, 2], [50, 50]), 100, 10, [1, 1], [1, 1], 1e6)
    assert np.allclose(w, 0.5, atol=1e-4)
    # n / (lam f) = 1 and index gap ln 3 with beta_hat = 0 and unit pull counts
    g = math.log(3.0)
    w = exact_regularized(H([g, 0.0], [1, 1]), 10, 10, [0, 0], [0, 0], 1.0)
    assert np.allclose(w, [0.75, 0.25], atol=1e-12)


def test_ucb_examples():
    assert ucb_bonus(2, math.e ** 2) == pytest.approx(math.sqrt(2))
    assert ucb_unstructured(H([1.0, 2.0], [2, 4]), 10.0) == 0
    assert ucb_bonus(1, 1e6) == pytest.approx(5.257, abs=1e-3)
    with pytest.raises(RequiresInitializationError):
        ucb_unstructured(H([0, 0], [0, 1]), 10.0)


def test_ucb_linear_examples():
    assert ucb_linear_beta(1, 1000, 0.1) == pytest.approx(5.573, abs=1e-3)
    state = LinUCBState(V=1.0)
    assert ucb_linear(state, 3, 1000, [0.1, 0.5]) == 1
    state = LinUCBState(V=1.0, W=1e6)
    assert ucb_linear(state, 3, 1000, [0.1, -0.1]) == 0
    with pytest.raises(UnsupportedDimensionError):
        ucb_linear(state, 3, 1000, np.eye(2))
    with pytest.raises(UnsupportedDimensionError):
        LinearUCBPolicy(1000, np.eye(2))


def test_thompson_unstructured_examples():
    rng = np.random.default_rng(0)
    sharp = [NormalParams(0.2, 1e-30), NormalParams(0.5, 1e-30)]
    assert all(thompson_unstructured(H([0, 0], [0, 0]), sharp, rng) == 1 for _ in range(100))
    sym = [BetaParams(2, 2), BetaParams(2, 2)]
    freq = np.mean([thompson_unstructured(H([0, 0], [0, 0]), sym, rng) == 0 for _ in range(10_000)])
    assert 0.47 <= freq <= 0.53
    sep = [BetaParams(1e6, 1), BetaParams(1, 1e6)]
    freq = np.mean([thompson_unstructured(H([0, 0], [0, 0]), sep, rng, 1.0, PM_GAMMA) == 0 for _ in range(10_000)])
    assert freq >= 0.999


def test_thompson_linear_examples():
    rng = np.random.default_rng(1)
    sharp = GaussianVecParams([0.3], [[1e-30]])
    assert all(thompson_linear(sharp, [0.5, -0.5, 0.2], rng) == 0 for _ in range(100))
    sym = GaussianVecParams([0.0], [[1.0]])
    freq = np.mean([thompson_linear(sym, [0.7, -0.7], rng) == 0 for _ in range(10_000)])
    assert 0.47 <= freq <= 0.53


def test_grid_policy_examples():
    # one-armed deterministic model: at the origin the unknown arm's drift 0.5 is below mu2 = 0.6
    model = ratio_model([0.5], [1.0], 0.0, constant=(0.6,), reward_rate=(0.0, 1.0))
    n = 20
    v = solve(model, GridSpec(n, n, n, 1.0))
    w = grid_policy(H([0, 0], [0, 0], 1), 1, v, n, n)
    assert w.tolist() == [0.0, 1.0]
    # t = 1 uses the last stored policy slice
    w_end = grid_policy(H([15, 0], [19, 1], n + 1), n + 1, v, n, n)
    assert is_distribution(w_end)


def test_sample_from_one_hot_ignores_u():
    w = np.array([[0.0, 1.0, 0.0]] * 5)
    assert sample_from(w, np.array([0.0, 0.2, 0.5, 0.99, 0.999999])).tolist() == [1] * 5


# -- properties ----------------------------------------------------------------

def test_grid_policy_agrees_with_closed_form():
    a_hat, b_hat = np.array([0.5, 0.3]), np.array([1.0, 1.0])
    model = ratio_model(a_hat, b_hat, 0.0, reward_rate=(0.0, 1.0))
    N = 40
    grid = GridSpec(N, N, N, 1.0)
    v = solve(model, grid, simplex=True)
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 500:
        l = int(rng.integers(1, N))
        j0 = int(rng.integers(0, l + 1))
        j = np.array([j0, l - j0])
        i_s = np.array([int(rng.integers(0, x + 1)) for x in j])
        s_hat, q_hat = i_s * grid.ds, j * grid.dq
        idx = (a_hat + s_hat) / (q_hat + b_hat)
        if abs(idx[0] - idx[1]) <= grid.ds / np.min(q_hat + b_hat):
            continue
        w = grid_policy(H(i_s, j, l + 1), l + 1, v, N, N)
        ref = exact_unregularized(H(i_s, j, l + 1), N, ScalingFactor(LINEAR_N), a_hat, b_hat)
        assert np.array_equal(w, ref), (l, i_s, j)
        checked += 1


@settings(max_examples=100, deadline=None)
@given(gap=st.floats(1e-3, 5), base=st.floats(-3, 3), K=st.integers(2, 6))
def test_softmax_sharpening(gap, base, K):
    s = np.full(K, base)
    s[K - 1] = base + gap
    h = H(s, np.ones(K, dtype=int))
    top = [exact_regularized(h, 10, 10, np.zeros(K), np.zeros(K), lam)[K - 1] for lam in (1.0, 0.1, 0.01)]
    assert top[0] <= top[1] <= top[2]


@settings(max_examples=100, deadline=None)
@given(s=st.lists(st.floats(-20, 20), min_size=3, max_size=3), q=st.lists(st.integers(1, 50), min_size=3,
       max_size=3), i=st.integers(1, 200), j=st.integers(1, 200))
def test_closed_form_is_time_invariant(s, q, i, j):
    a = exact_unregularized(H(s, q, i), 200, 14, [0.1, 0.2, 0.0], [1, 1, 2])
    b = exact_unregularized(H(s, q, j), 200, 14, [0.1, 0.2, 0.0], [1, 1, 2])
    assert np.array_equal(a, b)


@settings(max_examples=100, deadline=None)
@given(s=st.lists(st.floats(-50, 50), min_size=3, max_size=3), q=st.lists(st.integers(1, 100), min_size=3,
       max_size=3), lam=st.floats(1e-3, 1e3))
def test_closed_form_outputs_are_distributions(s, q, lam):
    h = H(s, q)
    w0 = exact_unregularized(h, 100, 10, [0.1, 0.2, 0.3], [1, 1, 1])
    w1 = exact_regularized(h, 100, 10, [0.1, 0.2, 0.3], [1, 1, 1], lam)
    assert is_distribution(w0) and sorted(w0.tolist()) == [0.0, 0.0, 1.0]
    assert is_distribution(w1) and np.all(w1 > 0) or lam < 1e-2


BATCH_POLICIES = [
    lambda: ClosedFormPolicy(100, 10.0, [0.1, 0.0, 0.2], [1, 1, 1]),
    lambda: ClosedFormPolicy(100, 10.0, [0.1, 0.0, 0.2], [1, 1, 1], lam=0.5),
    lambda: ThompsonPolicy([NormalParams(0.1, 0.01)] * 3, "normal"),
    lambda: ThompsonPolicy([BetaParams(1, 1)] * 3, "bernoulli"),
    lambda: UCBPolicy(1e4),
    lambda: LinearThompsonPolicy(GaussianVecParams([0.0], [[1.0]]), 1.0, [0.1, -0.2, 0.3]),
    lambda: LinearUCBPolicy(100, [0.1, -0.2, 0.3]),
    lambda: UniformPolicy(),
]


@settings(max_examples=50, deadline=None)
@given(which=st.integers(0, len(BATCH_POLICIES) - 1), seed=st.integers(0, 2**31 - 1))
def test_batched_policies_return_valid_arms(which, seed):
    rng = np.random.default_rng(seed)
    B, K = 16, 3
    Q = rng.integers(1, 30, (B, K))
    S = rng.uniform(0, 1, (B, K)) * Q
    pol = BATCH_POLICIES[which]()
    pol.reset(B)
    tape = {"u": rng.random(B), "z": rng.standard_normal((B, K)), "v": rng.random((B, K))}
    arms = np.asarray(pol.select(10, S, Q, tape))
    assert arms.shape == (B,) and arms.dtype.kind == "i"
    assert np.all((arms >= 0) & (arms < K))


def test_batched_closed_form_matches_per_history_function():
    rng = np.random.default_rng(4)
    Q = rng.integers(1, 40, (50, 3))
    S = rng.uniform(0, 1, (50, 3)) * Q
    pol = ClosedFormPolicy(100, 10.0, [0.1, 0.0, 0.2], [1, 1, 1])
    arms = pol.select(5, S, Q, {"u": rng.random(50)})
    for b in range(50):
        w = exact_unregularized(H(S[b], Q[b]), 100, 10.0, [0.1, 0.0, 0.2], [1, 1, 1])
        assert arms[b] == int(np.argmax(w))
