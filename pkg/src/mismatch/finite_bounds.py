"""Exact finite-length random-coding bounds and Monte Carlo estimates.

``rcu`` is the random-coding union bound for the i.i.d. ensemble with the
maximum-metric decoder (ties counted as errors), ``rcus`` its looser
single-letter relaxation through the tilted information density, and
``rcuss`` the refined variant whose prefactor depends on the block length.

Sums of i.i.d. per-letter statistics are handled in one of three ways:

* ``lattice``: the per-letter values lie on ``origin + h Z``, so the n-fold
  law lives on integer indices and is computed exactly;
* ``atoms``: few distinct values, enumerated exactly with merging;
* ``grid``: values rounded down and up onto a grid of step ``step``, which
  brackets the true bound from both sides.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.special import gammaln

from .dmc_core import ChannelTriple
from .errors import InfeasibleEnsemble, RejectionRateTooHigh, SingularTripleError, StateSpaceTooLarge
from .tilted import DiscretePmf, detect_lattice, make_family, merge_atoms, rho_hat

LATTICE_BUDGET = 10**7
ATOM_BUDGET = 2 * 10**5
STATE_BUDGET = 10**8
RCU_ATOM_BUDGET = 2 * 10**4
CONV_BUDGET = 5 * 10**9
GRID_STEP = 1e-4
TIE_TOL = 1e-9


@dataclass(frozen=True)
class BoundValue:
    value: float
    lower: float
    upper: float
    method: str


@dataclass(frozen=True)
class BoundRecord:
    n: int
    M: float
    R_bits: float
    bound_name: str
    value: float
    lower: float
    upper: float
    seed: int | None = None


@dataclass(frozen=True)
class CostEnsembleSpec:
    costs: np.ndarray  # (L, nx)
    delta: float

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.costs, dtype=float))
        object.__setattr__(self, "costs", c)
        if not self.delta > 0:
            raise InfeasibleEnsemble("delta must be positive")


def log_m_minus_one(log_m: float) -> float:
    """``log(M - 1)`` from ``log M``; ``-inf`` for ``M = 1``."""
    if log_m <= 0:
        return -math.inf
    return log_m + math.log(-math.expm1(-log_m))


# ---------------------------------------------------------------- sums of i.i.d. letters


def _power_dense(k: np.ndarray, p: np.ndarray, n: int) -> np.ndarray:
    """Law of the sum of ``n`` letters with nonnegative integer indices ``k``."""
    out = np.ones(1)
    span = int(k.max()) if k.size else 0
    for _ in range(n):
        nxt = np.zeros(out.size + span)
        for kj, pj in zip(k, p):
            nxt[kj : kj + out.size] += pj * out
        out = nxt
    return out


def _power_atoms(v: np.ndarray, p: np.ndarray, n: int) -> DiscretePmf:
    out = DiscretePmf(np.zeros(1), np.ones(1))
    for _ in range(n):
        sv = np.add.outer(out.support, v).ravel()
        sm = np.multiply.outer(out.mass, p).ravel()
        out = merge_atoms(sv, sm)
    return out


def _n_compositions(n: int, k: int) -> int:
    return comb(n + k - 1, k - 1)


def _choose_mode(values: np.ndarray, n: int, mode: str) -> tuple[str, float, float]:
    """Pick a representation and return ``(mode, origin, span)``."""
    if mode not in ("auto", "lattice", "atoms", "grid"):
        raise ValueError(f"unknown mode {mode!r}")
    vmin = float(values.min())
    if mode in ("auto", "lattice"):
        lat = detect_lattice(values)
        if lat.kind == "degenerate":
            return "lattice", vmin, 1.0
        if lat.is_lattice:
            width = round((values.max() - vmin) / lat.span)
            if n * width + 1 <= LATTICE_BUDGET:
                return "lattice", vmin, lat.span
        if mode == "lattice":
            size = n * round((values.max() - vmin) / lat.span) + 1 if lat.is_lattice else math.inf
            raise StateSpaceTooLarge(f"state space too large: {size} lattice points, budget {LATTICE_BUDGET}")
    if mode in ("auto", "atoms"):
        size = _n_compositions(n, np.unique(values).size)
        if size <= ATOM_BUDGET:
            return "atoms", 0.0, 0.0
        if mode == "atoms":
            raise StateSpaceTooLarge(f"state space too large: {size} atoms, budget {ATOM_BUDGET}")
    return "grid", 0.0, 0.0


@dataclass(frozen=True)
class SumTable:
    """Law of a sum of ``n`` i.i.d. letters, with ``-inf`` letters split off as ``deficit``.

    ``point``, ``lower`` and ``upper`` are ``(values, mass)`` pairs; ``lower``
    holds values rounded up and ``upper`` values rounded down, so that a
    decreasing function of the sum is bracketed. For exact methods all three
    coincide.
    """

    n: int
    method: str
    point: tuple[np.ndarray, np.ndarray]
    lower: tuple[np.ndarray, np.ndarray]
    upper: tuple[np.ndarray, np.ndarray]
    deficit: float


def sum_table(values, mass, n: int, mode: str = "auto", step: float = GRID_STEP) -> SumTable:
    values = np.asarray(values, dtype=float)
    mass = np.asarray(mass, dtype=float)
    fin = np.isfinite(values)
    if np.any(values[~fin] > 0):
        raise ValueError("letter values must be finite or -inf")
    deficit = 1.0 - float(np.sum(mass[fin])) ** n
    values, mass = values[fin], mass[fin]
    pmf = merge_atoms(values, mass)
    values, mass = pmf.support, pmf.mass
    if values.size == 0:
        empty = (np.zeros(0), np.zeros(0))
        return SumTable(n, "lattice", empty, empty, empty, 1.0)
    method, origin, span = _choose_mode(values, n, mode)
    if method == "lattice":
        k = np.round((values - origin) / span).astype(np.int64)
        dense = _power_dense(k, mass, n)
        t = n * origin + span * np.arange(dense.size)
        pair = (t, dense)
        return SumTable(n, method, pair, pair, pair, deficit)
    if method == "atoms":
        out = _power_atoms(values, mass, n)
        pair = (out.support, out.mass)
        return SumTable(n, method, pair, pair, pair, deficit)
    tables = []
    for rnd in (np.round, np.ceil, np.floor):
        k = rnd(values / step).astype(np.int64)
        k0 = int(k.min())
        dense = _power_dense(k - k0, mass, n)
        tables.append((step * (n * k0 + np.arange(dense.size)), dense))
    return SumTable(n, "grid", tables[0], tables[1], tables[2], deficit)


def _evaluate(table: SumTable, log_scale: float) -> BoundValue:
    """``E[min(1, exp(log_scale - S))]`` over the tabulated sum ``S``."""
    full = 1.0 if log_scale > -math.inf else 0.0

    def ev(pair):
        t, m = pair
        return float(m @ np.exp(np.minimum(log_scale - t, 0.0))) + table.deficit * full

    v, lo, hi = ev(table.point), ev(table.lower), ev(table.upper)
    return BoundValue(v, min(lo, v), max(hi, v), table.method)


# ---------------------------------------------------------------- rcus and rcuss


def _log_m(n: int, M=None, rate=None) -> float:
    if (M is None) == (rate is None):
        raise ValueError("give exactly one of M or rate")
    if M is not None:
        if M < 1:
            raise ValueError("M must be at least 1")
        return math.log(M)
    return n * float(rate)


def _resolve_s(triple: ChannelTriple, rate: float, s) -> float:
    if s is None or s == "auto":
        from .exponents import exponent_s

        return exponent_s(triple, rate)
    return float(s)


def density_sum_table(triple: ChannelTriple, s: float, n: int, mode: str = "auto", step: float = GRID_STEP) -> SumTable:
    f = make_family(triple, s)
    return sum_table(f.values, f.weights, n, mode, step)


def rcus_exact(triple: ChannelTriple, n: int, M=None, *, rate=None, s=None, mode: str = "auto", step: float = GRID_STEP) -> BoundValue:
    """``E[min(1, (M-1) exp(-i_s^n(X, Y)))]``; ``s=None`` picks the exponent-optimal ``s``."""
    log_m = _log_m(n, M, rate)
    s = _resolve_s(triple, log_m / n, s)
    return _evaluate(density_sum_table(triple, s, n, mode, step), log_m_minus_one(log_m))


def rcuss_exact(triple: ChannelTriple, n: int, M=None, *, rate=None, s=None, mode: str = "auto", step: float = GRID_STEP) -> BoundValue:
    """``E[min(1, M psi / sqrt(2 pi n c3) exp(-i_s^n(X, Y)))]``.

    Raises ``SingularTripleError`` when the metric never separates inputs
    or its zero pattern differs from the channel's.
    """
    log_m = _log_m(n, M, rate)
    R = log_m / n
    s = _resolve_s(triple, R, s)
    f = make_family(triple, s)
    p = rho_hat(f, R, n)
    if p.c3 is None:
        raise SingularTripleError("singular triple")
    log_scale = log_m - p.split_point()
    return _evaluate(sum_table(f.values, f.weights, n, mode, step), log_scale)


# ---------------------------------------------------------------- rcu


@dataclass(frozen=True)
class RcuTable:
    """Pairs ``(P[T], P[inner >= T | classes])`` over the outer states, per bracket side."""

    n: int
    method: str
    point: tuple[np.ndarray, np.ndarray]
    lower: tuple[np.ndarray, np.ndarray]
    upper: tuple[np.ndarray, np.ndarray]
    deficit: float

    def evaluate(self, log_m1: float) -> BoundValue:
        full = 1.0 if log_m1 > -math.inf else 0.0

        def ev(pair):
            w, tail = pair
            with np.errstate(divide="ignore"):
                lt = np.log(tail)
            return float(w @ np.exp(np.minimum(log_m1 + lt, 0.0))) + self.deficit * full

        v, lo, hi = ev(self.point), ev(self.lower), ev(self.upper)
        return BoundValue(v, min(lo, v), max(hi, v), self.method)


def _output_classes(triple: ChannelTriple, key) -> list[list[int]]:
    """Group reachable outputs whose inner laws of ``log q(X', y)`` coincide."""
    groups: dict = defaultdict(list)
    for y in np.flatnonzero(triple.output_support):
        groups[key(y)].append(int(y))
    return list(groups.values())


def _rcu_index(triple: ChannelTriple, n: int, k_in: np.ndarray, k_out: np.ndarray, budget: int):
    """Outer DP over (class counts, metric index) and inner tail per class count vector.

    ``k_in`` / ``k_out`` are nonnegative integer indices of ``log q`` on a
    common grid (``-1`` where ``q = 0``).
    """
    Q, P = triple.Q, triple.joint.P
    xs = np.flatnonzero(triple.input_support)

    def inner_key(y):
        d = defaultdict(float)
        for x in xs:
            if k_in[x, y] >= 0:
                d[int(k_in[x, y])] += Q[x]
        return tuple(sorted(d.items()))

    classes = _output_classes(triple, inner_key)
    C = len(classes)
    width = int(max(k_in.max(), k_out.max(), 0))
    n_tuples = _n_compositions(n, C)
    states = n_tuples * (n * width + 1)
    if states > budget:
        raise StateSpaceTooLarge(f"state space too large: {states} states, budget {budget}")
    work = n_tuples * (n * width + 1) ** 2 // 2
    if C > 1 and work > CONV_BUDGET:
        raise StateSpaceTooLarge(f"state space too large: {work} convolution terms, budget {CONV_BUDGET}")

    inner_kernels, outer_kernels = [], []
    for ys in classes:
        kin = dict(inner_key(ys[0]))
        inner_kernels.append((np.array(list(kin), dtype=np.int64), np.array(list(kin.values()))))
        d = defaultdict(float)
        for y in ys:
            for x in xs:
                if P[x, y] > 0 and k_out[x, y] >= 0:
                    d[int(k_out[x, y])] += P[x, y]
        outer_kernels.append((np.array(list(d), dtype=np.int64), np.array(list(d.values()))))

    states = {(0,) * C: np.ones(1)}
    for _ in range(n):
        nxt: dict = {}
        for counts, arr in states.items():
            for c, (k, p) in enumerate(outer_kernels):
                if k.size == 0:
                    continue
                key = counts[:c] + (counts[c] + 1,) + counts[c + 1 :]
                span = int(k.max())
                tgt = nxt.get(key)
                need = arr.size + span
                if tgt is None:
                    tgt = np.zeros(need)
                elif tgt.size < need:
                    tgt = np.r_[tgt, np.zeros(need - tgt.size)]
                for kj, pj in zip(k, p):
                    tgt[kj : kj + arr.size] += pj * arr
                nxt[key] = tgt
        states = nxt

    powers = []
    for k, p in inner_kernels:
        pw = [np.ones(1)]
        for _ in range(n):
            prev = pw[-1]
            nxt_arr = np.zeros(prev.size + int(k.max()))
            for kj, pj in zip(k, p):
                nxt_arr[kj : kj + prev.size] += pj * prev
            pw.append(nxt_arr)
        powers.append(pw)

    ws, tails = [], []
    for counts, outer in states.items():
        inner = np.ones(1)
        for c, m in enumerate(counts):
            inner = np.convolve(inner, powers[c][m])
        tail = np.r_[np.cumsum(inner[::-1])[::-1], 0.0]
        idx = np.minimum(np.arange(outer.size), inner.size)
        ws.append(outer)
        tails.append(tail[idx])
    w = np.concatenate(ws)
    t = np.clip(np.concatenate(tails), 0.0, 1.0)
    keep = w > 0
    return w[keep], t[keep]


def _rcu_atoms(triple: ChannelTriple, n: int, budget: int):
    """Exact enumeration over compositions of the outer letter pairs."""
    P, Q, lq = triple.joint.P, triple.Q, triple.log_q
    xs = np.flatnonzero(triple.input_support)
    pairs = [(x, y) for x, y in np.argwhere(triple.support) if np.isfinite(lq[x, y])]
    K = len(pairs)
    size = _n_compositions(n, K)
    if size > budget:
        raise StateSpaceTooLarge(f"state space too large: {size} compositions, budget {budget}")
    prior = {}
    for y in np.flatnonzero(triple.output_support):
        m = np.isfinite(lq[xs, y])
        prior[int(y)] = (lq[xs, y][m], Q[xs][m])
    inner_pow: dict = {}

    def inner_power(y, m):
        if (y, m) not in inner_pow:
            inner_pow[(y, m)] = _power_atoms(*prior[y], m)
        return inner_pow[(y, m)]

    logp = np.log([P[x, y] for x, y in pairs])
    vals = np.array([lq[x, y] for x, y in pairs])
    ws, tails = [], []
    for comp in _compositions(n, K):
        lw = gammaln(n + 1) - np.sum(gammaln(comp + 1)) + comp @ logp
        T = float(comp @ vals)
        ycount = defaultdict(int)
        for j, cnt in enumerate(comp):
            ycount[int(pairs[j][1])] += int(cnt)
        inner = DiscretePmf(np.zeros(1), np.ones(1))
        for y, cnt in ycount.items():
            pw = inner_power(y, cnt)
            sv = np.add.outer(inner.support, pw.support).ravel()
            sm = np.multiply.outer(inner.mass, pw.mass).ravel()
            inner = merge_atoms(sv, sm)
        tail = float(np.sum(inner.mass[inner.support >= T - TIE_TOL * max(1.0, abs(T))]))
        ws.append(math.exp(lw))
        tails.append(min(tail, 1.0))
    return np.array(ws), np.array(tails)


def _compositions(n: int, k: int) -> np.ndarray:
    """All length-``k`` nonnegative integer vectors summing to ``n``."""
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    parts = []
    for first in range(n + 1):
        sub = _compositions(n - first, k - 1)
        parts.append(np.c_[np.full(len(sub), first, dtype=np.int64), sub])
    return np.vstack(parts)


def rcu_table(triple: ChannelTriple, n: int, mode: str = "auto", step: float = GRID_STEP, budget: int = STATE_BUDGET) -> RcuTable:
    lq = triple.log_q
    xs = triple.input_support
    ys = triple.output_support
    rel = np.outer(xs, ys)
    fin = rel & np.isfinite(lq)
    vals = lq[fin]
    out_fin = triple.support & np.isfinite(lq)
    deficit = 1.0 - float(np.sum(triple.joint.P[out_fin])) ** n
    method, origin, span = _choose_mode(vals, n, mode)
    if method == "atoms" and mode == "auto" and _n_compositions(n, int(out_fin.sum())) > RCU_ATOM_BUDGET:
        method = "grid"
    if method == "atoms":
        pair = _rcu_atoms(triple, n, budget)
        return RcuTable(n, "atoms", pair, pair, pair, deficit)

    def indices(rnd, shift):
        k = np.full(lq.shape, -1, dtype=np.int64)
        k[fin] = rnd(lq[fin]).astype(np.int64) - shift
        return k

    if method == "lattice":
        k = indices(lambda v: np.round((v - origin) / span), 0)
        pair = _rcu_index(triple, n, k, k, budget)
        return RcuTable(n, "lattice", pair, pair, pair, deficit)
    k0 = int(np.floor(vals.min() / step))
    pt = indices(lambda v: np.round(v / step), k0)
    up_in, up_out = indices(lambda v: np.ceil(v / step), k0), indices(lambda v: np.floor(v / step), k0)
    lo_in, lo_out = up_out, up_in
    point = _rcu_index(triple, n, pt, pt, budget)
    upper = _rcu_index(triple, n, up_in, up_out, budget)
    lower = _rcu_index(triple, n, lo_in, lo_out, budget)
    return RcuTable(n, "grid", point, lower, upper, deficit)


def rcu_exact(triple: ChannelTriple, n: int, M=None, *, rate=None, mode: str = "auto", step: float = GRID_STEP, budget: int = STATE_BUDGET) -> BoundValue:
    """``E[min(1, (M-1) P[q^n(X', Y) >= q^n(X, Y) | X, Y])]`` with ``X'`` an independent codeword."""
    log_m = _log_m(n, M, rate)
    return rcu_table(triple, n, mode, step, budget).evaluate(log_m_minus_one(log_m))


# ---------------------------------------------------------------- cost-constrained ensemble


def mu_n(spec: CostEnsembleSpec, Q, n: int, budget: int = 5 * 10**7) -> float:
    """Probability that an i.i.d. ``Q`` sequence of length ``n`` meets every cost constraint.

    The cost sums depend on a sequence only through its type, so the
    probability is summed exactly over compositions.
    """
    Q = np.asarray(Q, dtype=float)
    xs = np.flatnonzero(Q > 0)
    size = _n_compositions(n, xs.size)
    if size > budget:
        raise StateSpaceTooLarge(f"state space too large: {size} compositions, budget {budget}")
    costs = spec.costs[:, xs]
    phi = spec.costs @ Q
    comps = _compositions(n, xs.size)
    logp = gammaln(n + 1) - gammaln(comps + 1).sum(axis=1) + comps @ np.log(Q[xs])
    dev = np.abs(comps @ costs.T - n * phi[None, :])
    ok = np.all(dev <= spec.delta * (1 + 1e-12), axis=1)
    return float(np.sum(np.exp(logp[ok])))


def cc_type(Q, n: int) -> np.ndarray:
    """Integer composition close to ``n Q`` by largest-remainder rounding."""
    Q = np.asarray(Q, dtype=float)
    raw = n * Q
    base = np.floor(raw).astype(np.int64)
    rem = n - int(base.sum())
    order = np.lexsort((np.arange(Q.size), -(raw - base)))
    base[order[:rem]] += 1
    return base


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class MonteCarloResult:
    estimate: float
    ci95: tuple[float, float]
    sigma: float
    trials: int
    errors: int
    seed: int


def _sample_codebooks(rng, Q, n, shape, ensemble, min_acceptance=1e-4, probe=10**5):
    nx = Q.size
    if isinstance(ensemble, str) and ensemble == "iid":
        return np.searchsorted(np.cumsum(Q)[:-1], rng.random(shape + (n,)), side="right")
    if isinstance(ensemble, str) and ensemble == "cc":
        seq = np.repeat(np.arange(nx), cc_type(Q, n))
        perm = np.argsort(rng.random(shape + (n,)), axis=-1)
        return seq[perm]
    if isinstance(ensemble, CostEnsembleSpec):
        need = int(np.prod(shape))
        phi = ensemble.costs @ Q
        kept = []
        have = drawn = 0
        while have < need:
            rate = max(have / drawn, min_acceptance) if drawn else 1.0
            batch = int(min(max(1.2 * (need - have) / rate, 1024), 10**6 // max(n, 1) + 1024))
            x = np.searchsorted(np.cumsum(Q)[:-1], rng.random((batch, n)), side="right")
            drawn += batch
            dev = np.abs(ensemble.costs[:, x].sum(axis=-1).T - n * phi[None, :])
            ok = x[np.all(dev <= ensemble.delta * (1 + 1e-12), axis=1)]
            kept.append(ok)
            have += ok.shape[0]
            if drawn >= probe and have < min_acceptance * drawn:
                raise RejectionRateTooHigh(f"rejection rate too high: accepted {have} of {drawn} draws")
        return np.vstack(kept)[:need].reshape(shape + (n,))
    raise ValueError(f"unknown ensemble {ensemble!r}")


def montecarlo_pe(
    triple: ChannelTriple,
    n: int,
    M: int,
    trials: int,
    ensemble="iid",
    seed: int = 0,
    batch: int = 50_000,
) -> MonteCarloResult:
    """Simulated error probability of the maximum-metric decoder with uniform tie-breaking.

    Uses a counter-based (Philox) generator, so a given ``seed`` and
    ``batch`` reproduce the estimate exactly.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    Q, lq = triple.Q, triple.log_q
    cumW = np.cumsum(triple.W, axis=1)
    errors = 0
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        X = _sample_codebooks(rng, Q, n, (B, M), ensemble)
        u = rng.random((B, n))
        Y = np.minimum((u[..., None] >= cumW[X[:, 0, :]]).sum(axis=-1), triple.ny - 1)
        S = lq[X, Y[:, None, :]].sum(axis=-1)
        best = S.max(axis=1)
        thr = np.where(np.isfinite(best), best - TIE_TOL * np.maximum(1.0, np.abs(best)), -np.inf)
        tied = S >= thr[:, None]
        k = tied.sum(axis=1)
        pick = rng.random(B)
        err = ~tied[:, 0] | (pick * k >= 1.0)
        errors += int(err.sum())
        done += B
    p = errors / trials
    sd = math.sqrt(max(p * (1 - p), 0.0) / trials)
    return MonteCarloResult(p, (max(p - 1.96 * sd, 0.0), min(p + 1.96 * sd, 1.0)), sd, trials, errors, seed)
