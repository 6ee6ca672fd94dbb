"""Achievable rates for mismatched decoding: GMI and LM rate.

Both are computed in dual form as suprema of the mean tilted information
density. ``lm_primal_upper`` solves the primal (a divergence minimization
over joint laws) as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .dmc_core import ChannelTriple, validate
from .tilted import log_tilted_denominator, scaled_log_metric

S_MAX = 1e3


@dataclass(frozen=True)
class RateResult:
    value: float  # nats
    s_star: float
    a_star: np.ndarray
    kkt_residual: float = float("nan")
    primal_upper: float | None = None


def mutual_information(triple: ChannelTriple) -> float:
    P, PY = triple.joint.P, triple.joint.PY
    m = triple.support
    return float(np.sum(P[m] * np.log(triple.W[m] / PY[np.nonzero(m)[1]])))


def _rev(triple: ChannelTriple, s: float, a: np.ndarray, log_den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lQ = np.log(triple.Q)
    return np.exp(lQ[:, None] + scaled_log_metric(s, triple.log_q) + a[:, None] - log_den[None, :])


def info_and_grad(triple: ChannelTriple, s: float, a: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Mean tilted density ``I_{s,a}`` with its gradient in ``s`` and ``a``."""
    P, PY, m = triple.joint.P, triple.joint.PY, triple.support
    log_den = log_tilted_denominator(triple, s, a)
    lq = np.where(m, triple.log_q, 0.0)
    val = float(np.sum(P * (scaled_log_metric(s, lq) + a[:, None])) - PY @ np.where(PY > 0, log_den, 0.0))
    rev = _rev(triple, s, a, log_den)
    lq_rev = np.where(rev > 0, triple.log_q, 0.0)
    ds = float(np.sum(P * lq) - PY @ np.sum(rev * lq_rev, axis=0))
    da = triple.Q - rev @ PY
    return val, ds, da


def generalized_info(triple: ChannelTriple, s: float, a=None) -> float:
    a = np.zeros(triple.nx) if a is None else np.asarray(a, dtype=float)
    return info_and_grad(triple, s, a)[0]


def _center(triple: ChannelTriple, a: np.ndarray) -> np.ndarray:
    a = np.where(triple.input_support, a, 0.0)
    return a - triple.Q @ a


def gmi(triple: ChannelTriple) -> RateResult:
    """Generalized mutual information ``sup_s I_s``.

    The density mean is concave in ``s``: a dyadic scan locates the bracket,
    then a bounded scalar search refines it.
    """
    zero = np.zeros(triple.nx)
    f = lambda s: generalized_info(triple, s)
    grid = 2.0 ** np.arange(-10, 7)
    vals = np.array([f(s) for s in grid])
    k = int(np.argmax(vals))
    if vals[k] <= 0:
        return RateResult(0.0, 0.0, zero)
    lo = grid[k - 1] if k > 0 else 0.0
    hi = grid[k + 1] if k + 1 < grid.size else 2.0 * grid[k]
    res = minimize_scalar(lambda s: -f(s), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    s, v = (res.x, -res.fun) if -res.fun >= vals[k] else (grid[k], vals[k])
    return RateResult(float(v), float(s), zero)


def _maximize_sa(triple: ChannelTriple, s0: float, a0: np.ndarray) -> tuple[float, float, np.ndarray]:
    def neg(theta):
        v, ds, da = info_and_grad(triple, theta[0], theta[1:])
        return -v, -np.r_[ds, da]

    res = minimize(
        neg,
        np.r_[s0, a0],
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, S_MAX)] + [(None, None)] * triple.nx,
        options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12},
    )
    return -float(res.fun), float(res.x[0]), _center(triple, res.x[1:])


def lm_rate(triple: ChannelTriple, start: RateResult | None = None) -> RateResult:
    """LM rate ``sup_{s >= 0, a} I_{s,a}`` with ``a`` centered under ``Q``."""
    g = gmi(triple)
    starts = [(g.s_star if g.s_star > 0 else 1.0, np.zeros(triple.nx)), (1.0, np.zeros(triple.nx))]
    if start is not None:
        starts.insert(0, (start.s_star, np.asarray(start.a_star, dtype=float)))
    best = (g.value, g.s_star, g.a_star)
    for s0, a0 in starts:
        cand = _maximize_sa(triple, s0, a0)
        if cand[0] > best[0]:
            best = cand
    v, s, a = best
    return RateResult(v, s, a, kkt_residual_lm(triple, s, a, which="a"))


def per_input_info(triple: ChannelTriple, s: float, a) -> np.ndarray:
    """``E_W[i_{s,a}(x, Y)]`` for every input ``x``."""
    a = np.asarray(a, dtype=float)
    log_den = log_tilted_denominator(triple, s, a)
    m = triple.support | (triple.W > 0)
    dens = np.where(m, scaled_log_metric(s, triple.log_q) + a[:, None] - log_den[None, :], 0.0)
    return np.sum(triple.W * dens, axis=1)


def kkt_residual_lm(triple: ChannelTriple, s: float, a, which: str = "both") -> float:
    """Stationarity residual of the LM dual.

    ``which="a"`` checks only the cost-vector condition
    ``sum_y P_Y(y) q(x,y)^s e^{a(x)} / den(y) = Q(x)``; ``"spread"`` checks
    only that ``E_W[i_{s,a}(x, Y)]`` is constant over the input support,
    which holds when ``Q`` is optimized as well. ``"both"`` returns the max.
    """
    a = np.asarray(a, dtype=float)
    xs = triple.input_support
    out = []
    if which in ("a", "both"):
        log_den = log_tilted_denominator(triple, s, a)
        rev = _rev(triple, s, a, log_den)
        lhs = (rev @ triple.joint.PY)[xs] / triple.Q[xs]
        out.append(float(np.max(np.abs(lhs - 1.0))))
    if which in ("spread", "both"):
        v = per_input_info(triple, s, a)[xs]
        out.append(float(v.max() - v.min()))
    return max(out)


def maximize_lm_over_q(W, q, tol: float = 1e-10, max_iter: int = 5000) -> tuple[ChannelTriple, RateResult]:
    """Jointly maximize ``I_{s,a}`` over ``(Q, s, a)`` by multiplicative ascent in ``Q``.

    Each step re-solves the LM dual at the current ``Q`` and moves ``Q``
    along the envelope gradient, ``Q <- Q exp(E_W[i(x, Y)])`` normalized.
    """
    W = np.asarray(W, dtype=float)
    Q = np.full(W.shape[0], 1.0 / W.shape[0])
    res = None
    for _ in range(max_iter):
        triple = validate(W, q, Q)
        res = lm_rate(triple, start=res)
        v = per_input_info(triple, res.s_star, res.a_star)
        if v.max() - v.min() < tol:
            break
        Q = Q * np.exp(v - v.max())
        Q /= Q.sum()
    return triple, RateResult(res.value, res.s_star, res.a_star, kkt_residual_lm(triple, res.s_star, res.a_star))


def lm_primal_upper(triple: ChannelTriple, solver: str = "CLARABEL") -> float:
    """Primal LM value: ``min I(X;Y)`` over joint laws with the true marginals
    whose expected log-metric is at least that of ``Q x W``.

    Solved as an exponential-cone program, so it shares no code with the
    dual route. Returns nats.
    """
    P, PY = triple.joint.P, triple.joint.PY
    ref = np.outer(triple.Q, PY)
    allowed = (ref > 0) & (triple.q > 0)
    idx = np.argwhere(allowed)
    x = cp.Variable(len(idx), nonneg=True)
    rows = np.zeros((triple.nx, len(idx)))
    cols = np.zeros((triple.ny, len(idx)))
    rows[idx[:, 0], np.arange(len(idx))] = 1.0
    cols[idx[:, 1], np.arange(len(idx))] = 1.0
    lq = triple.log_q[allowed]
    target = float(np.sum(P[triple.support] * triple.log_q[triple.support]))
    cons = [rows @ x == triple.Q, cols @ x == PY, lq @ x >= target]
    prob = cp.Problem(cp.Minimize(cp.sum(cp.rel_entr(x, ref[allowed]))), cons)
    prob.solve(solver=solver)
    return float(prob.value)
