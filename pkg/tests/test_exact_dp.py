from fractions import Fraction

import numpy as np
import pytest

from bayes_hjb.bandit_core import PM_GAMMA, ZERO_ONE, BetaParams, HistoryState
from bayes_hjb.errors import CapacityError, RangeError, UnsupportedFamilyError
from bayes_hjb.exact_dp import optimal_action, read_dump, solve_k_armed, solve_one_armed_bernoulli, write_dump


# -- frozen examples ---------------------------------------------------------

def test_one_step_tie():
    t = solve_one_armed_bernoulli(1, BetaParams(1, 1), 0.5)
    assert t.root_value() == pytest.approx(0.5, abs=1e-15)
    assert optimal_action(t, 1, HistoryState.initial(2)) == 0


def test_two_step_hand_induction():
    t = solve_one_armed_bernoulli(2, BetaParams(1, 1), 0.6)
    assert t.root_value() == pytest.approx(1.2, abs=1e-15)
    assert optimal_action(t, 1, HistoryState.initial(2)) == 1


def test_two_step_martingale():
    t = solve_one_armed_bernoulli(2, BetaParams(1, 1), 0.0)
    assert t.root_value() == pytest.approx(1.0, abs=1e-15)


def test_k_armed_one_round_symmetric():
    t = solve_k_armed(1, [BetaParams(2, 3), BetaParams(2, 3)])
    assert t.root_value() == pytest.approx(0.4, abs=1e-15)
    assert optimal_action(t, 1, HistoryState.initial(2)) == 0


def test_k_armed_matches_one_armed_with_near_deterministic_arm():
    n = 6
    one = solve_one_armed_bernoulli(n, BetaParams(1, 1), 0.5)
    two = solve_k_armed(n, [BetaParams(1, 1), BetaParams(1e6, 1e6)])
    assert abs(one.root_value() - two.root_value()) <= 1e-3


@pytest.mark.parametrize("n", [1, 2, 5, 10])
@pytest.mark.parametrize("a,b", [(1, 1), (2, 5), (7, 3)])
def test_single_arm_value_is_n_times_prior_mean(n, a, b):
    t = solve_k_armed(n, [BetaParams(a, b)])
    exact = Fraction(n) * Fraction(a, a + b)
    assert t.root_value() == pytest.approx(float(exact), rel=1e-13)


def test_terminal_round_plays_larger_posterior_mean():
    n = 4
    t = solve_k_armed(n, [BetaParams(1, 1), BetaParams(1, 1)])
    # arm 0: 2 wins in 2 pulls, arm 1: 0 wins in 1 pull
    h = HistoryState(np.array([2.0, 0.0]), np.array([2, 1]), n)
    assert optimal_action(t, n, h) == 0
    h = HistoryState(np.array([0.0, 1.0]), np.array([2, 1]), n)
    assert optimal_action(t, n, h) == 1


def test_out_of_range_state_raises():
    t = solve_one_armed_bernoulli(3, BetaParams(1, 1), 0.5)
    with pytest.raises(RangeError):
        optimal_action(t, 2, HistoryState(np.array([5.0, 0.0]), np.array([1, 0]), 2))
    with pytest.raises(RangeError):
        optimal_action(t, 4, HistoryState.initial(2))


def test_capacity_error_reports_bytes():
    with pytest.raises(CapacityError) as exc:
        solve_one_armed_bernoulli(2000, BetaParams(1, 1), 0.5, mem_cap=1 << 20)
    assert exc.value.required_bytes > exc.value.cap_bytes


def test_continuous_family_is_unsupported():
    with pytest.raises(UnsupportedFamilyError):
        solve_k_armed(3, [BetaParams(1, 1)], family="normal")


def test_too_many_arms():
    with pytest.raises(ValueError):
        solve_k_armed(2, [BetaParams(1, 1)] * 4)


# -- properties ----------------------------------------------------------------

def _p(prior, m, q, support):
    a, b = prior.alpha, prior.beta
    return (a + m) / (a + b + q) if support == ZERO_ONE else (a + 0.5 * m + 0.5 * q) / (a + b + q)


@pytest.mark.parametrize("support", [ZERO_ONE, PM_GAMMA])
def test_bellman_consistency_one_armed(support):
    n, gamma, mu2 = 40, 0.5, 0.1
    prior = BetaParams(3, 2)
    t = solve_one_armed_bernoulli(n, prior, mu2, support, gamma)
    rng = np.random.default_rng(0)
    unit = 1.0 if support == ZERO_ONE else gamma
    fail = 0 if support == ZERO_ONE else -1
    for _ in range(1000):
        i = int(rng.integers(1, n + 1))
        m = int(rng.integers(t.m_min(i), t.m_min(i) + t.n_m(i)))
        q = int(rng.integers(0, i))
        p = _p(prior, m, q, support)
        mean = p if support == ZERO_ONE else gamma * (2 * p - 1)
        w1 = mean + p * t.value(i + 1, (m + 1) * unit, q + 1) + (1 - p) * t.value(i + 1, (m + fail) * unit, q + 1)
        w2 = mu2 + t.value(i + 1, m * unit, q)
        stored = t.value(i, m * unit, q)
        assert abs(stored - max(w1, w2)) <= 1e-12 * max(1.0, abs(stored))


@pytest.mark.parametrize("support", [ZERO_ONE, PM_GAMMA])
def test_bellman_consistency_two_arms(support):
    n, gamma = 14, 1.0
    priors = [BetaParams(1, 1), BetaParams(2, 1)]
    t = solve_k_armed(n, priors, gamma, support)
    rng = np.random.default_rng(1)
    unit = 1.0 if support == ZERO_ONE else gamma
    fail = 0 if support == ZERO_ONE else -1
    for _ in range(1000):
        i = int(rng.integers(1, n + 1))
        q0 = int(rng.integers(0, i))
        q = np.array([q0, i - 1 - q0])
        m = np.array([int(rng.integers(t.m_min(i), t.m_min(i) + t.n_m(i))) for _ in range(2)])
        g = []
        for k in range(2):
            p = _p(priors[k], m[k], q[k], support)
            mean = p if support == ZERO_ONE else gamma * (2 * p - 1)
            e = np.eye(2, dtype=int)[k]
            win = t.value(i + 1, (m + e) * unit, q + e)
            lose = t.value(i + 1, (m + fail * e) * unit, q + e)
            g.append(mean + p * win + (1 - p) * lose)
        stored = t.value(i, m * unit, q)
        assert abs(stored - max(g)) <= 1e-12 * max(1.0, abs(stored))


def test_value_bounds_zero_one():
    n, mu2 = 30, 0.3
    t = solve_one_armed_bernoulli(n, BetaParams(2, 2), mu2)
    for i in range(1, n + 1):
        w = t.rounds[i][0]
        nxt = np.zeros((i + 1, i + 1)) if i == n else t.rounds[i + 1][0]
        # the same (m, q) indices exist at round i + 1 ({0,1} support starts at m = 0);
        # corners with m > q are unreachable and give "probabilities" above 1
        m, q = np.indices(w.shape)
        ok = m <= q
        diff = (w - nxt[:i, :i])[ok]
        assert np.all(diff >= -1e-12) and np.all(diff <= 1.0 + 1e-12)
        assert np.all(w[ok] >= 0) and np.all(w[ok] <= n - i + 1 + 1e-12)


def test_root_value_per_round_converges_as_n_doubles():
    errs = []
    for n in (16, 32, 64, 128):
        t = solve_one_armed_bernoulli(n, BetaParams(n / 2, n / 2), 0.5, keep="root")
        errs.append(abs(t.root_value() / n - 0.5))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_visit_sees_every_round_and_keep_root_stores_one():
    seen = []
    t = solve_one_armed_bernoulli(8, BetaParams(1, 1), 0.5, keep="root", visit=lambda i, v, a: seen.append(i))
    assert seen == list(range(8, 0, -1))
    assert list(t.rounds) == [1]


@pytest.mark.parametrize("kind", ["one", "two"])
def test_dump_round_trip(tmp_path, kind):
    if kind == "one":
        t = solve_one_armed_bernoulli(6, BetaParams(1, 2), 0.4, PM_GAMMA, 0.5)
    else:
        t = solve_k_armed(5, [BetaParams(1, 1), BetaParams(1, 2)])
    path = tmp_path / "dp.txt"
    write_dump(t, path)
    head = path.read_text().splitlines()[0].split()
    assert head[:3] == [str(t.n), str(t.K), t.support]
    back = read_dump(path)
    assert back.one_armed == t.one_armed
    for i in t.rounds:
        v0, a0 = t.rounds[i]
        v1, a1 = back.rounds[i]
        valid = np.ones(v0.shape, bool) if t.one_armed else None
        if valid is None:
            q = np.indices(v0.shape)[t.K:]
            valid = (i - 1 - q.sum(axis=0)) >= 0
        assert np.array_equal(v0[valid], v1[valid])
        assert np.array_equal(a0[valid], a1[valid])
