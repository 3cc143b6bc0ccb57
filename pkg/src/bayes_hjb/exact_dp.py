"""Bayes-optimal values and actions by backward induction.

Value tables are indexed by integer counters: the cumulative reward of a
Bernoulli arm is stored as m, the number of reward units (s = m for {0,1}
rewards, s = m * gamma for +/-gamma rewards), so posterior means are computed
from exact integers and never drift.

Arms are 0-based throughout; ties go to the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bandit_core import PM_GAMMA, SUPPORTS, ZERO_ONE, BetaParams, HistoryState
from .errors import CapacityError, RangeError, UnsupportedFamilyError

DEFAULT_MEM_CAP = 2 * 2**30
MAX_ARMS = 3


@dataclass
class DPTable:
    """Backward-induction tables.

    ``rounds[i] = (values, actions)``.  For the one-armed problem the arrays
    are indexed ``[m - m_min(i), q]`` over the full rectangle the recursion
    is defined on (including unreachable corners).  For K Bernoulli arms they
    are indexed ``[m_0, ..., m_{K-1}, q_0, ..., q_{K-2}]`` with the last pull
    count implied by sum(q) = i - 1.
    """

    n: int
    K: int
    support: str
    gamma: float
    priors: tuple
    mu2: Optional[float] = None
    rounds: dict = field(default_factory=dict)

    @property
    def one_armed(self) -> bool:
        return self.mu2 is not None

    @property
    def K_state(self) -> int:
        return 1 if self.one_armed else self.K

    def m_min(self, i: int) -> int:
        return 0 if self.support == ZERO_ONE else -(i - 1)

    def n_m(self, i: int) -> int:
        return i if self.support == ZERO_ONE else 2 * i - 1

    def reward_units(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return s if self.support == ZERO_ONE else s / self.gamma

    def root_value(self) -> float:
        values, _ = self.rounds[1]
        return float(values.reshape(-1)[0])

    def index(self, i: int, s, q):
        """Array index of state (s, q) at round i; raises RangeError outside the table."""
        if i not in self.rounds:
            raise RangeError(f"round {i} not stored (stored: {len(self.rounds)} rounds)")
        s = np.atleast_1d(s)[: self.K_state]
        q = np.atleast_1d(q)[: self.K_state]
        m = self.reward_units(s)
        mi = np.rint(m).astype(np.int64)
        if np.any(np.abs(m - mi) > 1e-9):
            raise RangeError(f"cumulative reward {s} is not a multiple of the reward unit")
        lo = self.m_min(i)
        mi = mi - lo
        if np.any(mi < 0) or np.any(mi >= self.n_m(i)) or np.any(q < 0) or np.any(q > i - 1):
            raise RangeError(f"state s={s}, q={q} outside the round-{i} table")
        if self.one_armed:
            return int(mi[0]), int(q[0])
        if int(np.sum(q)) != i - 1:
            raise RangeError(f"pull counts {q} do not sum to {i - 1}")
        return tuple(int(x) for x in mi) + tuple(int(x) for x in q[:-1])

    def value(self, i: int, s, q) -> float:
        if i == self.n + 1:
            return 0.0
        return float(self.rounds[i][0][self.index(i, s, q)])


def optimal_action(table: DPTable, i: int, h: HistoryState) -> int:
    if not 1 <= i <= table.n:
        raise RangeError(f"round {i} outside 1..{table.n}")
    return int(table.rounds[i][1][table.index(i, h.s, h.q)])


def _check_capacity(nbytes, cap):
    if nbytes > cap:
        raise CapacityError(int(nbytes), int(cap), "DP table")


def _success_prob(alpha, beta, m, q, support):
    if support == ZERO_ONE:
        return (alpha + m) / (alpha + beta + q)
    return (alpha + 0.5 * m + 0.5 * q) / (alpha + beta + q)


def solve_one_armed_bernoulli(n: int, prior: BetaParams, mu2: float, support: str = ZERO_ONE,
                              gamma: float = 1.0, keep: str = "all",
                              visit: Optional[Callable] = None,
                              mem_cap: int = DEFAULT_MEM_CAP) -> DPTable:
    """One unknown Bernoulli arm (arm 0) against a known arm paying ``mu2`` (arm 1).

    The recursion per round i, for m in the reward-unit range and q = 0..i-1:

        w_1 = E[X | m, q] + p w'(m+1, q+1) + (1-p) w'(m_fail, q+1)
        w_2 = mu2 + w'(m, q)

    where m_fail = m for {0,1} rewards and m - 1 for +/-gamma rewards.
    ``keep="all"`` stores every round; ``keep="root"`` only round 1.  ``visit``
    is called as ``visit(i, values, actions)`` for every round as it is made.
    """
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if support not in SUPPORTS:
        raise ValueError(f"support must be one of {SUPPORTS}")
    table = DPTable(n, 2, support, float(gamma), (prior,), mu2=float(mu2))
    sizes = [table.n_m(i) * i for i in range(1, n + 2)]
    need = 9 * sum(sizes) if keep == "all" else 8 * 6 * max(sizes)
    _check_capacity(need, mem_cap)
    a, b = prior.alpha, prior.beta
    W = np.zeros((table.n_m(n + 1), n + 1))
    for i in range(n, 0, -1):
        m = np.arange(table.m_min(i), table.m_min(i) + table.n_m(i), dtype=float)[:, None]
        q = np.arange(i, dtype=float)[None, :]
        p = _success_prob(a, b, m, q, support)
        if support == ZERO_ONE:
            win, lose, stay = W[1:i + 1, 1:i + 1], W[0:i, 1:i + 1], W[0:i, 0:i]
            mean = p
        else:
            win, lose, stay = W[2:2 * i + 1, 1:i + 1], W[0:2 * i - 1, 1:i + 1], W[1:2 * i, 0:i]
            mean = gamma * (2.0 * p - 1.0)
        w1 = mean + p * win + (1.0 - p) * lose
        w2 = mu2 + stay
        actions = np.where(w1 >= w2, 0, 1).astype(np.int8)
        values = np.maximum(w1, w2)
        if visit is not None:
            visit(i, values, actions)
        if keep == "all" or i == 1:
            table.rounds[i] = (values, actions)
        W = values
    return table


def solve_k_armed(n: int, priors, gamma: float = 1.0, support: str = ZERO_ONE, keep: str = "all",
                  visit: Optional[Callable] = None, mem_cap: int = DEFAULT_MEM_CAP,
                  family: str = "bernoulli") -> DPTable:
    """K Bernoulli arms with independent Beta priors, K <= 3.

    Cost is O(n^(2K)); the arrays for round i have (#m)^K * i^(K-1) entries.
    """
    if family != "bernoulli":
        raise UnsupportedFamilyError(
            f"exact DP needs a discrete reward support; {family!r} rewards are served by the HJB route")
    priors = tuple(priors)
    K = len(priors)
    if not 1 <= K <= MAX_ARMS:
        raise ValueError(f"K must be between 1 and {MAX_ARMS}")
    if support not in SUPPORTS:
        raise ValueError(f"support must be one of {SUPPORTS}")
    table = DPTable(n, K, support, float(gamma), priors)

    def shape(i):
        return (table.n_m(i),) * K + (i,) * (K - 1)

    sizes = [int(np.prod(shape(i))) for i in range(1, n + 2)]
    need = 9 * sum(sizes) if keep == "all" else 8 * (4 + 2 * K) * max(sizes)
    _check_capacity(need, mem_cap)

    step = 1 if support == ZERO_ONE else 2  # index shift of a success (and of a failure for +/-gamma)
    W = np.zeros(shape(n + 1))
    for i in range(n, 0, -1):
        shp = shape(i)
        grids = np.meshgrid(*[np.arange(d) for d in shp], indexing="ij", sparse=True)
        m_idx, q_free = grids[:K], grids[K:]
        q_last = (i - 1) - sum(q_free, 0 * m_idx[0])
        q_all = list(q_free) + [q_last]
        valid = q_last >= 0
        g = []
        for k in range(K):
            m_k = m_idx[k] + table.m_min(i)
            q_k = np.maximum(q_all[k], 0)
            p = _success_prob(priors[k].alpha, priors[k].beta, m_k, q_k, support)
            mean = p if support == ZERO_ONE else gamma * (2.0 * p - 1.0)
            # next round: m offset grows by 1 for +/-gamma, q of arm k grows by 1
            base = [slice(None)] * len(shp)
            off = 0 if support == ZERO_ONE else 1
            for j in range(K):
                if j != k:
                    base[j] = slice(off, off + shp[j])
            for j in range(K - 1):
                base[K + j] = slice(1, i + 1) if j == k else slice(0, i)
            win, lose = list(base), list(base)
            win[k] = slice(off + 1, off + 1 + shp[k])
            lose[k] = slice(off + 1 - step, off + 1 - step + shp[k])
            gk = mean + p * W[tuple(win)] + (1.0 - p) * W[tuple(lose)]
            g.append(np.broadcast_to(gk, shp))
        g = np.stack(g)
        actions = np.argmax(g, axis=0).astype(np.int8)
        values = np.where(valid, np.max(g, axis=0), 0.0)
        if visit is not None:
            visit(i, values, actions)
        if keep == "all" or i == 1:
            table.rounds[i] = (values, actions)
        W = values
    return table


def write_dump(table: DPTable, path) -> None:
    """Text dump: header ``n K support gamma``, then ``i s... q... value action`` rows."""
    with open(path, "w") as fh:
        fh.write(f"{table.n} {table.K} {table.support} {table.gamma!r}\n")
        for i in sorted(table.rounds):
            values, actions = table.rounds[i]
            lo = table.m_min(i)
            unit = 1.0 if table.support == ZERO_ONE else table.gamma
            for idx in np.ndindex(values.shape):
                if table.one_armed:
                    s = [(idx[0] + lo) * unit]
                    q = [idx[1]]
                else:
                    s = [(x + lo) * unit for x in idx[: table.K]]
                    q = list(idx[table.K:])
                    q.append(i - 1 - sum(q))
                    if q[-1] < 0:
                        continue
                cols = [str(i)] + [repr(float(x)) for x in s] + [str(x) for x in q]
                cols += [repr(float(values[idx])), str(int(actions[idx]))]
                fh.write(" ".join(cols) + "\n")


def read_dump(path) -> DPTable:
    """Rebuild a :class:`DPTable` (values and actions) from :func:`write_dump` output."""
    with open(path) as fh:
        head = fh.readline().split()
        n, K, support, gamma = int(head[0]), int(head[1]), head[2], float(head[3])
        rows = np.loadtxt(fh, ndmin=2)
    ks = (rows.shape[1] - 3) // 2
    one_armed = ks < K
    table = DPTable(n, K, support, gamma, (), mu2=0.0 if one_armed else None)
    for i in np.unique(rows[:, 0]).astype(int):
        r = rows[rows[:, 0] == i]
        if one_armed:
            shp = (table.n_m(i), i)
        else:
            shp = (table.n_m(i),) * K + (i,) * (K - 1)
        values = np.zeros(shp)
        actions = np.zeros(shp, dtype=np.int8)
        for row in r:
            s, q = row[1:1 + ks], row[1 + ks:1 + 2 * ks].astype(int)
            table.rounds[i] = (values, actions)
            idx = table.index(i, s, q)
            values[idx] = row[-2]
            actions[idx] = int(row[-1])
        table.rounds[i] = (values, actions)
    return table
