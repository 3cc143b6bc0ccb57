"""Explicit finite-difference solvers for the limiting HJB equation.

The value is computed backward in time on a (t, s_hat, q_hat) lattice.  For
every node and every arm k a candidate g_k is formed from the next time
slice; the value is max_k g_k (or a soft maximum when entropy-regularized)
and the policy is the maximizing arm (or the softmax weights).

Two layouts are supported.  The rectangle layout stores every q_hat in
[0, 1]^K at every time; the simplex layout keeps only nodes with
sum_k q_hat_k = t, which is what histories can actually reach and makes K = 2
and 3 grids affordable.

Notation inside the stencils, for arm k at slice l (values taken at l + 1):
    V    value at (i, j)
    Vq   value at (i, j + e_k)
    Vqp  value at (i + e_k, j + e_k)
    Vqm  value at (i - e_k, j + e_k)
Out-of-range neighbours are replaced by the boundary node (zero gradient).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import CapacityError, NumericError, RangeError, StabilityError
from .hjb_model import LINEAR_N, SQRT_N, LimitModel, ScalingFactor

log = logging.getLogger(__name__)

DIFFUSIVE = "diffusive"
DETERMINISTIC = "deterministic"
AUTO = "auto"
SCHEMES = (DIFFUSIVE, DETERMINISTIC)

FLOOR_EPS = 1e-9
STABILITY_RTOL = 1e-12
DEFAULT_MEM_CAP = 3 * 2**30


@dataclass(frozen=True)
class GridSpec:
    """Lattice t = l/N_t, s_hat = i*ds for |i| <= N_s, q_hat = j/N_q, with ds = S/N_s."""

    N_t: int
    N_s: int
    N_q: int
    S: float

    def __post_init__(self):
        if min(self.N_t, self.N_s, self.N_q) < 1 or self.S <= 0:
            raise ValueError("grid sizes must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.N_t

    @property
    def dq(self) -> float:
        return 1.0 / self.N_q

    @property
    def ds(self) -> float:
        return self.S / self.N_s

    @property
    def s_nodes(self) -> np.ndarray:
        return np.arange(-self.N_s, self.N_s + 1) * self.ds

    @property
    def q_nodes(self) -> np.ndarray:
        return np.arange(self.N_q + 1) * self.dq

    @classmethod
    def for_scaling(cls, N: int, scaling, S: Optional[float] = None) -> "GridSpec":
        """Default grid for a scaling family.

        f(n) = n: dt = dq = ds = 1/N and S = 1.
        f(n) = sqrt(n): dt = dq = 1/N, ds = N^(-1/2) and S = 4 (rounded up to a whole cell).
        """
        fam = ScalingFactor(scaling).family if isinstance(scaling, str) else scaling.family
        if fam == LINEAR_N:
            S = 1.0 if S is None else float(S)
            N_s = max(1, int(math.ceil(S * N - 1e-9)))
            return cls(N, N_s, N, N_s / N)
        S = 4.0 if S is None else float(S)
        ds = 1.0 / math.sqrt(N)
        N_s = max(1, int(math.ceil(S / ds - 1e-9)))
        return cls(N, N_s, N, N_s * ds)


@dataclass
class GridValueFunction:
    """Solved lattice values and policies.

    ``values[l]`` for l = 0..N_t (slice N_t is the zero terminal slice),
    ``actions[l]`` and, for regularized solves, ``weights[l]`` for l < N_t.
    Node arrays are indexed by (i_1 + N_s, ..., i_K + N_s, j_1, ..., j_K) in
    the rectangle layout; the simplex layout drops j_K, which is implied by
    sum(j) = l.  Slices that were not persisted are ``None``.
    """

    grid: GridSpec
    K: int
    K_state: int
    scheme: str
    lam: float
    simplex: bool
    values: list
    actions: list
    weights: Optional[list] = None
    scaling: Optional[str] = None
    model_desc: str = ""
    clip_events: int = 0

    @property
    def root(self) -> np.ndarray:
        return self.values[0]

    def node_shape(self):
        ns, nq = 2 * self.grid.N_s + 1, self.grid.N_q + 1
        return (ns,) * self.K_state + (nq,) * (self.K_state - 1 if self.simplex else self.K_state)

    def node_index(self, t, s_hat, q_hat):
        """Floor indices (l, node tuple) for batched states plus a clip mask."""
        g = self.grid
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s_hat = np.atleast_2d(np.asarray(s_hat, dtype=float))
        q_hat = np.atleast_2d(np.asarray(q_hat, dtype=float))
        l = np.clip(np.floor(t / g.dt + FLOOR_EPS).astype(np.int64), 0, g.N_t)
        i = np.floor(s_hat / g.ds + FLOOR_EPS).astype(np.int64)
        clipped = np.any((i < -g.N_s) | (i > g.N_s), axis=-1)
        i = np.clip(i, -g.N_s, g.N_s) + g.N_s
        j = np.clip(np.floor(q_hat / g.dq + FLOOR_EPS).astype(np.int64), 0, g.N_q)
        if self.simplex:
            lt = np.minimum(l, g.N_t - 1)
            remaining = lt.copy()
            free = []
            for k in range(self.K_state - 1):
                jk = np.minimum(j[:, k], remaining)
                remaining = remaining - jk
                free.append(jk)
            idx = tuple(i[:, k] for k in range(self.K_state)) + tuple(free)
        else:
            idx = tuple(i[:, k] for k in range(self.K_state)) + tuple(j[:, k] for k in range(self.K_state))
        return l, idx, clipped

    def lookup_batch(self, t, s_hat, q_hat, need_value: bool = True):
        """Piecewise-constant values and policies at a batch of continuous states.

        Returns ``(values (B,), policy (B, K), clipped (B,))``.  At t = 1 the
        value is 0 and the policy is the one stored for the last time slice.
        With ``need_value=False`` slices whose values were not persisted give NaN.
        """
        l, idx, clipped = self.node_index(t, s_hat, q_hat)
        B = l.shape[0]
        vals = np.zeros(B)
        pol = np.zeros((B, self.K))
        for lv in np.unique(l):
            sel = l == lv
            sub = tuple(x[sel] for x in idx)
            lp = min(int(lv), self.grid.N_t - 1)
            if lv < self.grid.N_t:
                if self.values[lv] is not None:
                    vals[sel] = self.values[lv][sub]
                elif need_value:
                    raise RangeError(f"time slice {lv} was not persisted")
                else:
                    vals[sel] = np.nan
            if self.actions[lp] is None:
                raise RangeError(f"policy slice {lp} was not persisted")
            if self.weights is not None:
                pol[sel] = self.weights[lp][sub]
            else:
                pol[sel, self.actions[lp][sub]] = 1.0
        return vals, pol, clipped


def lookup(v: GridValueFunction, t: float, s_hat, q_hat):
    """Value and arm distribution of the floor node containing (t, s_hat, q_hat)."""
    vals, pol, clipped = v.lookup_batch([t], np.atleast_1d(s_hat)[None], np.atleast_1d(q_hat)[None])
    if clipped[0]:
        v.clip_events += 1
    return float(vals[0]), pol[0]


# --------------------------------------------------------------------------
# stability


def check_stability(model: LimitModel, grid: GridSpec, scheme: str) -> None:
    """Refuse grids that violate the explicit-scheme stability condition.

    Diffusive: dt <= ds^2 / max sigma_hat^2.  Deterministic (upwind):
    max |mu_hat| dt <= ds, with the drift probed on grid nodes reachable from
    the origin when the model knows its reward range.
    """
    dt, ds = grid.dt, grid.ds
    if scheme == DIFFUSIVE:
        sig2 = max(s * s for s in model.sigma_hat)
        if sig2 == 0.0:
            raise StabilityError("diffusive scheme needs a positive diffusion; use the deterministic scheme")
        bound = ds * ds / sig2
        ok = dt <= bound * (1 + STABILITY_RTOL)
        printed_ok = dt <= min(model.sigma_hat) ** 2 * ds * ds * (1 + STABILITY_RTOL)
        if ok != printed_ok:
            log.warning("diffusive stability: dt=%g satisfies dt <= ds^2/max sigma^2 = %g: %s; "
                        "dt <= min(sigma)^2 ds^2 = %g: %s; enforcing the former",
                        dt, bound, ok, min(model.sigma_hat) ** 2 * ds * ds, printed_ok)
        if not ok:
            raise StabilityError(f"diffusive stability violated: dt={dt:.6g} > ds^2/max sigma_hat^2={bound:.6g}",
                                 suggested_dt=bound)
        return
    mu_max = _max_abs_drift(model, grid)
    if mu_max * dt > ds * (1 + STABILITY_RTOL):
        raise StabilityError(f"upwind CFL violated: max|mu_hat| dt = {mu_max * dt:.6g} > ds = {ds:.6g}",
                             suggested_dt=ds / mu_max)


def _max_abs_drift(model: LimitModel, grid: GridSpec) -> float:
    s, q = grid.s_nodes, grid.q_nodes
    if model.kind == "ratio":
        out = 0.0
        for k in range(model.K_state):
            S, Q = s[:, None], q[None, :]
            mask = model.arm_reachable(S, Q)
            mu = model.arm_drift(k, S, Q)
            if np.any(mask):
                out = max(out, float(np.max(np.abs(mu[mask]))))
        return out
    Ks = model.K_state
    rng = np.random.default_rng(0)
    total = (len(s) * len(q)) ** Ks
    if total <= 2_000_000:
        mesh = np.meshgrid(*([s] * Ks + [q] * Ks), indexing="ij")
        S = np.stack(mesh[:Ks], -1).reshape(-1, Ks)
        Q = np.stack(mesh[Ks:], -1).reshape(-1, Ks)
    else:
        S = rng.choice(s, size=(100_000, Ks))
        Q = rng.choice(q, size=(100_000, Ks))
    return float(np.max(np.abs(model.drift(S, Q))))


# --------------------------------------------------------------------------
# sweep


def _shift(V, axis, step):
    n = V.shape[axis]
    idx = np.clip(np.arange(n) + step, 0, n - 1)
    return np.take(V, idx, axis=axis)


class _Stencil:
    """Per-slice candidate values g_k for one model/grid/scheme."""

    def __init__(self, model: LimitModel, grid: GridSpec, scheme: str, simplex: bool):
        self.model, self.grid, self.scheme, self.simplex = model, grid, scheme, simplex
        self.Ks = model.K_state
        self.shape = ((2 * grid.N_s + 1,) * self.Ks
                      + (grid.N_q + 1,) * (self.Ks - 1 if simplex else self.Ks))
        self.nd = len(self.shape)
        self._static_mu = None if simplex else self._drift(None)

    def _axis(self, v, axis):
        shape = [1] * self.nd
        shape[axis] = len(v)
        return v.reshape(shape)

    def coords(self, l):
        g = self.grid
        s = [self._axis(g.s_nodes, k) for k in range(self.Ks)]
        if not self.simplex:
            return s, [self._axis(g.q_nodes, self.Ks + k) for k in range(self.Ks)], None
        j = np.arange(g.N_q + 1)
        free = [self._axis(j, self.Ks + k) for k in range(self.Ks - 1)]
        j_last = l - sum(free, np.zeros([1] * self.nd, dtype=np.int64))
        valid = j_last >= 0
        q = [x * g.dq for x in free] + [np.maximum(j_last, 0) * g.dq]
        return s, q, valid

    def _drift(self, l):
        s, q, _ = self.coords(l)
        m = self.model
        if m.kind == "ratio":
            return [m.arm_drift(k, s[k], q[k]) for k in range(self.Ks)]
        S = np.stack([np.broadcast_to(x, self.shape) for x in s], -1)
        Q = np.stack([np.broadcast_to(x, self.shape) for x in q], -1)
        mu = m.drift(S, Q)
        return [mu[..., k] for k in range(self.Ks)]

    def valid(self, l):
        return self.coords(l)[2]

    def candidates(self, V: np.ndarray, l: int) -> np.ndarray:
        """Stack of g_k over all arms (state arms first, then constant arms)."""
        g = self.grid
        dt, ds, dq = g.dt, g.ds, g.dq
        mus = self._static_mu if self._static_mu is not None else self._drift(l)
        out = []
        for k in range(self.Ks):
            if self.simplex:
                Vq = _shift(V, self.Ks + k, 1) if k < self.Ks - 1 else V
            else:
                Vq = _shift(V, self.Ks + k, 1)
            Vqp = _shift(Vq, k, 1)
            Vqm = _shift(Vq, k, -1)
            mu = mus[k]
            if self.scheme == DIFFUSIVE:
                sig2 = self.model.sigma_hat[k] ** 2
                flux = mu / (2 * ds) * (Vqp - Vqm) + sig2 / (2 * ds * ds) * (Vqp - 2 * Vq + Vqm) + mu
            else:
                flux = (np.maximum(mu, 0.0) / ds * (Vqp - Vq) + np.minimum(mu, 0.0) / ds * (Vq - Vqm)) + mu
            if self.simplex:
                gk = Vq + dt * flux
            else:
                gk = V + dt * ((Vq - V) / dq + flux)
            out.append(np.broadcast_to(gk, self.shape))
        for c in self.model.constant:
            out.append(np.broadcast_to(V + dt * c, self.shape))
        return np.stack(out)


def _resolve_scheme(model: LimitModel, scheme: str) -> str:
    if scheme == AUTO:
        return DETERMINISTIC if model.deterministic else DIFFUSIVE
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES + (AUTO,)}")
    return scheme


def sweep(model: LimitModel, grid: GridSpec, scheme: str = AUTO, lam: float = 0.0,
          simplex: bool = False, check: bool = True) -> Iterator:
    """Backward sweep; yields ``(l, values, actions, weights)`` for l = N_t - 1 down to 0.

    ``weights`` is None for unregularized solves.  Only two slices are alive
    at a time, so the caller decides what to keep.
    """
    scheme = _resolve_scheme(model, scheme)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if simplex:
        if grid.N_q != grid.N_t:
            raise ValueError("the simplex layout needs N_q = N_t")
        if model.constant:
            raise ValueError("the simplex layout tracks every arm's pulls; constant arms are not supported")
    if check:
        check_stability(model, grid, scheme)
    st = _Stencil(model, grid, scheme, simplex)
    V = np.zeros(st.shape)
    for l in range(grid.N_t - 1, -1, -1):
        G = st.candidates(V, l)
        if lam > 0:
            tau = grid.dt * lam
            Vn = tau * logsumexp(G / tau, axis=0)
            W = np.moveaxis(softmax(G / tau, axis=0), 0, -1)
            A = np.argmax(G, axis=0).astype(np.int8)
        else:
            A = np.argmax(G, axis=0).astype(np.int8)
            Vn = np.take_along_axis(G, A[None].astype(np.intp), axis=0)[0]
            W = None
        valid = st.valid(l)
        if valid is not None:
            Vn = np.where(valid, Vn, 0.0)
            A = np.where(valid, A, 0).astype(np.int8)
            if W is not None:
                W = np.where(valid[..., None], W, 1.0 / G.shape[0])
        if not np.all(np.isfinite(Vn)):
            bad = np.argwhere(~np.isfinite(Vn))[0]
            raise NumericError(f"non-finite value at slice l={l}, node {tuple(int(x) for x in bad)}")
        yield l, Vn, A, W
        V = Vn


def solve(model: LimitModel, grid: GridSpec, scheme: str = AUTO, lam: float = 0.0, simplex: bool = False,
          persist: str = "all", mem_cap: int = DEFAULT_MEM_CAP, check: bool = True) -> GridValueFunction:
    """Run a full sweep and collect it into a :class:`GridValueFunction`.

    ``persist="all"`` keeps every slice, ``"policy"`` keeps every policy slice
    but only the root values, ``"none"`` keeps slice 0 only.
    """
    scheme = _resolve_scheme(model, scheme)
    st_shape = ((2 * grid.N_s + 1,) * model.K_state
                + (grid.N_q + 1,) * (model.K_state - 1 if simplex else model.K_state))
    nodes = int(np.prod(st_shape))
    per_slice = {"all": 9 + (8 * model.K if lam > 0 else 0),
                 "policy": 1 + (8 * model.K if lam > 0 else 0), "none": 0}[persist]
    need = nodes * (per_slice * (grid.N_t + 1) + 8 * (4 + 2 * model.K))
    if need > mem_cap:
        raise CapacityError(need, mem_cap, "HJB grid")
    N_t = grid.N_t
    values = [None] * (N_t + 1)
    actions = [None] * N_t
    weights = [None] * N_t if lam > 0 else None
    values[N_t] = np.zeros(st_shape)
    for l, V, A, W in sweep(model, grid, scheme, lam, simplex, check):
        if persist == "all" or l == 0:
            values[l] = V
        if persist in ("all", "policy") or l == 0:
            actions[l] = A
            if weights is not None:
                weights[l] = W
    return GridValueFunction(grid, model.K, model.K_state, scheme, float(lam), simplex, values, actions,
                             weights, scaling=model.hyper.get("scaling"), model_desc=_describe(model))


def solve_diffusive(model: LimitModel, grid: GridSpec, **kw) -> GridValueFunction:
    if model.deterministic:
        raise ValueError("model has no diffusion; use solve_deterministic")
    return solve(model, grid, DIFFUSIVE, **kw)


def solve_deterministic(model: LimitModel, grid: GridSpec, **kw) -> GridValueFunction:
    if not model.deterministic:
        raise ValueError("model has diffusion; use solve_diffusive")
    return solve(model, grid, DETERMINISTIC, **kw)


def solve_regularized(model: LimitModel, grid: GridSpec, lam: float, scheme: str = AUTO,
                      **kw) -> GridValueFunction:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return solve(model, grid, scheme, lam=lam, **kw)


def _describe(model: LimitModel) -> str:
    parts = [model.kind, f"sigma_hat={list(model.sigma_hat)}"]
    if model.kind == "ratio":
        parts += [f"alpha_hat={model.alpha_hat.tolist()}", f"beta_hat={model.beta_hat.tolist()}"]
    if model.constant:
        parts.append(f"constant={list(model.constant)}")
    return " ".join(parts)


# --------------------------------------------------------------------------
# text dump


def write_grid_dump(v: GridValueFunction, path) -> None:
    """Header ``K Nt Ns Nq S lambda scheme``, then ``l i... j... value action_or_weights...`` rows.

    s indices are signed (-N_s..N_s); every state arm's j is written, also in
    the simplex layout.  The terminal slice (all zeros) is not written.
    """
    g = v.grid
    if any(x is None for x in v.values[:-1]):
        raise ValueError("dump needs every slice persisted (persist='all')")
    shape = v.node_shape()
    idx = np.indices(shape).reshape(len(shape), -1).T
    Ks = v.K_state
    with open(path, "w") as fh:
        fh.write(f"{v.K} {g.N_t} {g.N_s} {g.N_q} {g.S!r} {v.lam!r} {v.scheme}\n")
        for l in range(g.N_t):
            i_cols = idx[:, :Ks] - g.N_s
            j_cols = idx[:, Ks:]
            keep = np.ones(len(idx), dtype=bool)
            if v.simplex:
                last = l - j_cols.sum(axis=1)
                keep = last >= 0
                j_cols = np.column_stack([j_cols, last])
            vals = v.values[l].reshape(-1)
            if v.weights is not None:
                pol = v.weights[l].reshape(-1, v.K)
            else:
                pol = v.actions[l].reshape(-1, 1)
            ints = np.column_stack([np.full(len(idx), l), i_cols, j_cols])[keep]
            for r_int, r_val, r_pol in zip(ints, vals[keep], pol[keep]):
                fh.write(" ".join(str(int(x)) for x in r_int) + f" {float(r_val)!r} "
                         + (" ".join(repr(float(x)) for x in r_pol) if v.weights is not None
                            else str(int(r_pol[0]))) + "\n")


def read_grid_dump(path, scaling: Optional[str] = None) -> GridValueFunction:
    """Rebuild a :class:`GridValueFunction` from :func:`write_grid_dump` output.

    The dump carries no scaling factor; unless given, it is inferred from the
    scheme (deterministic -> f(n) = n, diffusive -> f(n) = sqrt(n)), which is
    how the scaling selects the scheme for the supported families.
    """
    with open(path) as fh:
        head = fh.readline().split()
        K, N_t, N_s, N_q = (int(x) for x in head[:4])
        S, lam, scheme = float(head[4]), float(head[5]), head[6]
        rows = np.loadtxt(fh, ndmin=2)
    grid = GridSpec(N_t, N_s, N_q, S)
    n_pol = K if lam > 0 else 1
    Ks = (rows.shape[1] - 2 - n_pol) // 2
    ls = rows[:, 0].astype(np.int64)
    i_cols = rows[:, 1:1 + Ks].astype(np.int64) + N_s
    j_cols = rows[:, 1 + Ks:1 + 2 * Ks].astype(np.int64)
    simplex = Ks > 0 and bool(np.all(j_cols.sum(axis=1) == ls)) and len(rows) < N_t * (2 * N_s + 1) ** Ks * (N_q + 1) ** Ks
    if scaling is None:
        scaling = LINEAR_N if scheme == DETERMINISTIC else SQRT_N
    v = GridValueFunction(grid, K, Ks, scheme, lam, simplex, [None] * (N_t + 1), [None] * N_t,
                          [None] * N_t if lam > 0 else None, scaling=scaling, model_desc=f"loaded from {path}")
    shape = v.node_shape()
    v.values[N_t] = np.zeros(shape)
    jj = j_cols[:, :Ks - 1] if simplex else j_cols
    for l in range(N_t):
        sel = ls == l
        idx = tuple(i_cols[sel].T) + tuple(jj[sel].T)
        vals = np.zeros(shape)
        vals[idx] = rows[sel, 1 + 2 * Ks]
        v.values[l] = vals
        pol = rows[sel, 2 + 2 * Ks:]
        A = np.zeros(shape, dtype=np.int8)
        if lam > 0:
            W = np.full(shape + (K,), 1.0 / K)
            W[idx] = pol
            v.weights[l] = W
            A[idx] = np.argmax(pol, axis=1)
        else:
            A[idx] = pol[:, 0].astype(np.int8)
        v.actions[l] = A
    return v
