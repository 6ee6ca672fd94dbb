"""Random-coding error exponents for i.i.d., cost-constrained and
constant-composition ensembles under a mismatched metric.

Every ensemble reduces to one kernel,

    T(x, y) = rho * (log sum_x' Q(x') q(x', y)^s e^{b(x')} - s log q(x, y) - c(x)),

averaged either jointly (``-log E[e^T]``) or per input
(``-E_X log E[e^T | X]``, constant composition). The ensembles differ only
in how ``b`` and ``c`` are parametrized. For fixed ``rho`` all of them except
the optimized single-cost ensemble are concave in their parameters, so the
inner problem is solved by L-BFGS with analytic gradients and the outer
problem over ``rho`` by a coarse scan plus bounded refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import cvxpy as cp
import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.sparse import csr_matrix
from scipy.special import logsumexp

from .dmc_core import ChannelTriple
from .errors import InfeasibleEnsemble
from .rates import gmi
from .tilted import log_tilted_denominator, scaled_log_metric

S_MAX = 1e3
PARAM_MAX = 1e3
RHO_GRID = np.linspace(0.0, 1.0, 11)


@dataclass(frozen=True)
class ExponentPoint:
    ensemble: str
    rate: float
    value: float
    rho: float
    s: float
    a: np.ndarray | None = None
    r: np.ndarray | None = None
    rbar: np.ndarray | None = None
    costs: np.ndarray | None = None
    theta: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class ExponentCurve:
    rates: np.ndarray
    values: np.ndarray
    ensemble: str
    maximizer_trace: list[ExponentPoint]


def e0_kernel(triple: ChannelTriple, rho: float, s: float, b, c, per_input: bool):
    """Kernel value ``F`` and its gradients with respect to ``s``, ``b`` and ``c``."""
    m = triple.support
    P = triple.joint.P
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    log_den = log_tilted_denominator(triple, s, b)
    lq = np.where(m, triple.log_q, 0.0)
    T = np.where(m, rho * (log_den[None, :] - scaled_log_metric(s, lq) - c[:, None]), 0.0)
    with np.errstate(divide="ignore"):
        logw = np.where(m, np.log(P) + T, -np.inf)
    if per_input:
        xs = triple.input_support
        lse = logsumexp(logw[xs], axis=1)
        F = -float(triple.Q[xs] @ (lse - np.log(triple.Q[xs])))
        omega = np.zeros_like(P)
        omega[xs] = triple.Q[xs, None] * np.exp(logw[xs] - lse[:, None])
    else:
        lse = float(logsumexp(logw))
        F = -lse
        omega = np.exp(logw - lse)
    with np.errstate(divide="ignore"):
        lQ = np.log(triple.Q)
    rev = np.exp(lQ[:, None] + scaled_log_metric(s, triple.log_q) + b[:, None] - log_den[None, :])
    dlds = np.sum(rev * np.where(rev > 0, triple.log_q, 0.0), axis=0)
    gs = -rho * float(np.sum(omega * (dlds[None, :] - lq)))
    gb = -rho * (rev @ omega.sum(axis=0))
    gc = rho * omega.sum(axis=1)
    return F, gs, gb, gc


class _Param:
    """Maps an unconstrained parameter vector to ``(s, b, c)`` and back-propagates."""

    def __init__(self, triple: ChannelTriple, kind: str, costs=None):
        self.t = triple
        self.kind = kind
        self.per_input = kind == "cc"
        nx = triple.nx
        if costs is not None:
            costs = np.atleast_2d(np.asarray(costs, dtype=float))
            if costs.shape[1] != nx:
                raise InfeasibleEnsemble("cost functions must have one value per input")
            self.costs = costs
            phi = costs @ triple.Q
            self.A = (costs - phi[:, None]).T  # (nx, L), centered
        self.size = {
            "iid": 1,
            "cost_prime_fixed": 1,
            "cost_prime": 1 + nx,
            "cost": 1 + 2 * (self.A.shape[1] if costs is not None else 0),
            "cost1": 1 + nx + 2,
            "cc": 1 + nx,
        }[kind]

    def center(self, u):
        return np.where(self.t.input_support, u - self.t.Q @ u, 0.0)

    def center_t(self, g):
        g = np.where(self.t.input_support, g, 0.0)
        return g - self.t.Q * g.sum()

    def unpack(self, th):
        nx = self.t.nx
        s = th[0]
        k = self.kind
        if k == "iid":
            z = np.zeros(nx)
            return s, z, z
        if k == "cost_prime_fixed":
            a = self.A[:, 0]
            return s, a, a
        if k == "cost_prime":
            a = self.center(th[1:])
            return s, a, a
        if k == "cost":
            L = self.A.shape[1]
            return s, self.A @ th[1 + L :], self.A @ th[1 : 1 + L]
        if k == "cost1":
            u = self.center(th[1 : 1 + nx])
            r, rbar = th[1 + nx], th[2 + nx]
            return s, rbar * u, r * u
        return s, th[1:], th[1:]

    def value_grad(self, rho: float, th: np.ndarray):
        s, b, c = self.unpack(th)
        F, gs, gb, gc = e0_kernel(self.t, rho, s, b, c, self.per_input)
        nx = self.t.nx
        k = self.kind
        if k in ("iid", "cost_prime_fixed"):
            g = np.array([gs])
        elif k == "cost_prime":
            g = np.r_[gs, self.center_t(gb + gc)]
        elif k == "cost":
            g = np.r_[gs, self.A.T @ gc, self.A.T @ gb]
        elif k == "cost1":
            u = self.center(th[1 : 1 + nx])
            r, rbar = th[1 + nx], th[2 + nx]
            g = np.r_[gs, self.center_t(rbar * gb + r * gc), u @ gc, u @ gb]
        else:
            g = np.r_[gs, gb + gc]
        return F, g

    def bounds(self):
        return [(0.0, S_MAX)] + [(-PARAM_MAX, PARAM_MAX)] * (self.size - 1)


def _inner(par: _Param, rho: float, starts) -> tuple[float, np.ndarray]:
    best_F, best_th = -np.inf, None
    for th0 in starts:
        th0 = np.asarray(th0, dtype=float)
        F0, _ = par.value_grad(rho, th0)
        if F0 > best_F:
            best_F, best_th = F0, th0
        res = minimize(
            lambda th: tuple(-v for v in par.value_grad(rho, th)),
            th0,
            jac=True,
            method="L-BFGS-B",
            bounds=par.bounds(),
            options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-11},
        )
        if -res.fun > best_F:
            best_F, best_th = -float(res.fun), res.x
    return best_F, best_th


def _optimize(par: _Param, rate: float, starts: list[tuple[float, np.ndarray]]) -> tuple[float, float, np.ndarray]:
    """Maximize ``F(rho, theta) - rho * rate`` over ``rho in [0, 1]`` and ``theta``.

    ``starts`` are ``(rho, theta)`` pairs; the result is never worse than
    any of them, which is what keeps warm-started ensembles ordered.
    """
    best = [0.0, 0.0, np.asarray(starts[0][1], dtype=float)]

    def consider(val, rho, th):
        if val > best[0]:
            best[:] = [val, rho, th]

    for rho, th in starts:
        th = np.asarray(th, dtype=float)
        consider(par.value_grad(rho, th)[0] - rho * rate, rho, th)
        if rho > 0:
            F, th2 = _inner(par, rho, [th])
            consider(F - rho * rate, rho, th2)

    def g(rho, extra=()):
        if rho <= 0:
            return 0.0, best[2]
        F, th = _inner(par, rho, [best[2], *extra])
        consider(F - rho * rate, rho, th)
        return F - rho * rate, th

    vals = [0.0]
    prev = best[2]
    for rho in RHO_GRID[1:]:
        v, prev = g(rho, (prev,))
        vals.append(v)
    k = int(np.argmax(vals))
    if best[1] > 0:
        k_best = int(np.argmin(np.abs(RHO_GRID - best[1])))
        if vals[k_best] < best[0]:
            k = k_best
    lo, hi = RHO_GRID[max(k - 1, 0)], RHO_GRID[min(k + 1, RHO_GRID.size - 1)]
    minimize_scalar(lambda r: -g(r)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    for edge in (lo, hi):
        g(edge)
    return best[0], best[1], best[2]


def _point(par: _Param, ensemble: str, rate: float, val: float, rho: float, th: np.ndarray) -> ExponentPoint:
    s, b, c = par.unpack(th)
    kind = par.kind
    kw = {}
    if kind in ("cc", "cost_prime", "cost_prime_fixed"):
        kw["a"] = par.center(b) if kind == "cc" else b
    if kind == "cost1":
        nx = par.t.nx
        kw.update(a=par.center(th[1 : 1 + nx]), r=np.array([th[1 + nx]]), rbar=np.array([th[2 + nx]]))
        kw["costs"] = kw["a"][None, :]
    if kind == "cost":
        L = par.A.shape[1]
        kw.update(r=th[1 : 1 + L].copy(), rbar=th[1 + L :].copy(), costs=par.costs)
    return ExponentPoint(ensemble, rate, max(val, 0.0), rho, float(s), theta=np.asarray(th), **kw)


def _s_start(triple: ChannelTriple) -> float:
    g = gmi(triple)
    return g.s_star if g.s_star > 0 else 1.0


def er_iid(triple: ChannelTriple, rate: float) -> ExponentPoint:
    par = _Param(triple, "iid")
    s0 = _s_start(triple)
    starts = [(1.0, np.array([s0])), (0.5, np.array([s0]))]
    val, rho, th = _optimize(par, rate, starts)
    return _point(par, "iid", rate, val, rho, th)


def er_cost_prime(triple: ChannelTriple, rate: float, a1=None, start: ExponentPoint | None = None) -> ExponentPoint:
    """Single-cost exponent with both multipliers pinned to one.

    With ``a1`` given the only free parameter is ``s``; with ``a1=None`` the
    cost function itself is optimized as well.
    """
    nx = triple.nx
    if a1 is not None:
        par = _Param(triple, "cost_prime_fixed", costs=np.asarray(a1, dtype=float)[None, :])
        s0 = start.s if start is not None else _s_start(triple)
        starts = [(start.rho if start else 1.0, np.array([s0]))]
        val, rho, th = _optimize(par, rate, starts)
        return _point(par, "cost_prime", rate, val, rho, th)
    par = _Param(triple, "cost_prime")
    start = start if start is not None else er_iid(triple, rate)
    a0 = start.a if start.a is not None else np.zeros(nx)
    val, rho, th = _optimize(par, rate, [(start.rho, np.r_[start.s, a0])])
    return _point(par, "cost_prime", rate, val, rho, th)


def er_cost(triple: ChannelTriple, rate: float, costs=None, start: ExponentPoint | None = None) -> ExponentPoint:
    """Cost-constrained exponent.

    ``costs`` is an ``(L, nx)`` array of fixed cost functions whose
    multipliers are optimized. ``costs=None`` optimizes a single cost
    function jointly with its two multipliers.
    """
    nx = triple.nx
    if costs is None:
        par = _Param(triple, "cost1")
        if start is None:
            start = er_cost_prime(triple, rate)
        a0 = start.a if start.a is not None else np.zeros(nx)
        starts = [(start.rho, np.r_[start.s, a0, 1.0, 1.0])]
        val, rho, th = _optimize(par, rate, starts)
        return _point(par, "cost", rate, val, rho, th)
    par = _Param(triple, "cost", costs=costs)
    L = par.A.shape[1]
    if start is not None and start.r is not None and start.r.size == L:
        th0 = np.r_[start.s, start.r, start.rbar]
        starts = [(start.rho, th0)]
    else:
        s0 = start.s if start is not None else _s_start(triple)
        starts = [(start.rho if start else 1.0, np.r_[s0, np.zeros(2 * L)])]
    val, rho, th = _optimize(par, rate, starts)
    return _point(par, "cost", rate, val, rho, th)


def er_cc(triple: ChannelTriple, rate: float, start: ExponentPoint | None = None) -> ExponentPoint:
    par = _Param(triple, "cc")
    nx = triple.nx
    starts = []
    if start is not None:
        if start.costs is not None and start.rbar is not None and start.rbar.size == 1:
            a0 = start.rbar[0] * par.center(start.costs[0])
        elif start.a is not None:
            a0 = start.a
        else:
            a0 = np.zeros(nx)
        starts.append((start.rho, np.r_[start.s, a0]))
    else:
        starts.append((1.0, np.r_[_s_start(triple), np.zeros(nx)]))
    val, rho, th = _optimize(par, rate, starts)
    return _point(par, "cc", rate, val, rho, th)


def exponent_chain(triple: ChannelTriple, rate: float) -> dict[str, ExponentPoint]:
    """i.i.d., pinned single-cost, optimized single-cost and constant-composition
    exponents, each warm-started from the previous so the ordering is preserved."""
    iid = er_iid(triple, rate)
    cp_ = er_cost_prime(triple, rate, start=iid)
    c1 = er_cost(triple, rate, start=cp_)
    cc = er_cc(triple, rate, start=c1)
    return {"iid": iid, "cost_prime": cp_, "cost1": c1, "cc": cc}


def cc_plugin_costs(triple: ChannelTriple, point: ExponentPoint) -> np.ndarray:
    """Two cost functions under which the cost-constrained exponent matches ``point``.

    Returns ``[r, a]`` where ``a`` is the constant-composition cost vector and
    ``r(x) = (1/rho) log sum_y W(y|x) (sum_x' Q q(x',y)^s e^{a(x')} / q(x,y)^s)^rho``.
    """
    rho, s, a = point.rho, point.s, point.a
    if rho <= 0:
        return np.vstack([np.zeros(triple.nx), a])
    log_den = log_tilted_denominator(triple, s, a)
    m = triple.support
    inner = np.where(m, log_den[None, :] - scaled_log_metric(s, np.where(m, triple.log_q, 0.0)), 0.0)
    with np.errstate(divide="ignore"):
        r = logsumexp(np.where(m, np.log(triple.W) + rho * inner, -np.inf), axis=1) / rho
    r = np.where(triple.input_support, r, 0.0)
    return np.vstack([r, a])


def cc_plugin_start(point: ExponentPoint) -> ExponentPoint:
    return ExponentPoint("cost", point.rate, point.value, point.rho, point.s, r=np.array([1.0, 0.0]), rbar=np.array([0.0, 1.0]))


def exponent_curve(triple: ChannelTriple, rates, ensemble: str = "iid") -> ExponentCurve:
    rates = np.asarray(rates, dtype=float)
    trace = []
    for R in rates:
        if ensemble == "iid":
            trace.append(er_iid(triple, R))
        elif ensemble in ("cost_prime", "cost1", "cc"):
            trace.append(exponent_chain(triple, R)[ensemble])
        else:
            raise ValueError(f"unknown ensemble {ensemble!r}")
    return ExponentCurve(rates, np.array([p.value for p in trace]), ensemble, trace)


def exponent_s(triple: ChannelTriple, rate: float) -> float:
    """Metric exponent ``s`` maximizing the i.i.d. exponent at ``rate``.

    Above the GMI the exponent vanishes for every ``s``; the GMI-achieving
    ``s`` is returned there, which is the limit from below.
    """
    g = gmi(triple)
    if rate >= g.value:
        return g.s_star
    return er_iid(triple, rate).s


def er_primal_upper(triple: ChannelTriple, rate: float, ensemble="cc", solver: str = "CLARABEL") -> float:
    """Primal form of the exponent: a double divergence minimization.

    ``ensemble`` is ``"iid"``, ``"cc"`` or an ``(L, nx)`` array of cost
    functions. Solved as a convex exponential-cone program in the pair of
    joint laws, independently of the dual route.
    """
    t = triple
    P0 = t.joint.P
    okP = t.support & (t.q > 0)
    okT = np.outer(t.input_support, t.output_support) & (t.q > 0)
    iP, iT = np.argwhere(okP), np.argwhere(okT)
    nP, nT = len(iP), len(iT)
    p = cp.Variable(nP, nonneg=True)
    pt = cp.Variable(nT, nonneg=True)
    colP = csr_matrix((np.ones(nP), (iP[:, 1], np.arange(nP))), shape=(t.ny, nP))
    colT = csr_matrix((np.ones(nT), (iT[:, 1], np.arange(nT))), shape=(t.ny, nT))
    pick = csr_matrix((np.ones(nT), (np.arange(nT), iT[:, 1])), shape=(nT, t.ny))
    py = colP @ p
    # reference law Q(x) P_Y(y) is affine in p
    ref_vec = cp.multiply(t.Q[iT[:, 0]], pick @ py)
    lqP, lqT = t.log_q[okP], t.log_q[okT]
    cons = [cp.sum(p) == 1, colT @ pt == py, lqT @ pt >= lqP @ p]
    if isinstance(ensemble, str) and ensemble == "cc":
        rowP = csr_matrix((np.ones(nP), (iP[:, 0], np.arange(nP))), shape=(t.nx, nP))
        rowT = csr_matrix((np.ones(nT), (iT[:, 0], np.arange(nT))), shape=(t.nx, nT))
        cons += [rowP @ p == t.Q, rowT @ pt == t.Q]
    elif not isinstance(ensemble, str):
        costs = np.atleast_2d(np.asarray(ensemble, dtype=float))
        phi = costs @ t.Q
        cons += [costs[:, iP[:, 0]] @ p == phi, costs[:, iT[:, 0]] @ pt == phi]
    elif ensemble != "iid":
        raise ValueError(f"unknown ensemble {ensemble!r}")
    obj = cp.sum(cp.rel_entr(p, P0[okP])) + cp.pos(cp.sum(cp.rel_entr(pt, ref_vec)) - rate)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=solver)
    return float(prob.value)
