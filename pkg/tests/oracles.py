"""Slow, direct reference computations used only by the tests.

Each oracle evaluates its quantity from the defining sum with no shared code
paths beyond the triple itself.
"""

import itertools
import math

import numpy as np


def _sequences(k, n):
    return list(itertools.product(range(k), repeat=n))


def brute_rcu(t, n, M):
    """Enumerate every (x, y, x') sequence triple; ties count as errors."""
    W, q, Q = t.W, t.q, t.Q
    xs = _sequences(t.nx, n)
    ys = _sequences(t.ny, n)
    Qn = {x: math.prod(Q[a] for a in x) for x in xs}
    total = 0.0
    for x in xs:
        for y in ys:
            p = Qn[x] * math.prod(W[a, b] for a, b in zip(x, y))
            if p == 0:
                continue
            own = math.prod(q[a, b] for a, b in zip(x, y))
            tail = sum(
                Qn[xb] for xb in xs if math.prod(q[a, b] for a, b in zip(xb, y)) >= own * (1 - 1e-12)
            )
            total += p * min(1.0, (M - 1) * tail)
    return total


def brute_rcus(t, n, M, s, multiplier=None):
    """``E[min(1, c e^{-i_s^n})]`` with ``c = M - 1`` unless given."""
    W, q, Q = t.W, t.q, t.Q
    c = (M - 1) if multiplier is None else multiplier
    den = (Q[:, None] * q**s).sum(axis=0)
    total = 0.0
    for x in _sequences(t.nx, n):
        for y in _sequences(t.ny, n):
            p = math.prod(Q[a] * W[a, b] for a, b in zip(x, y))
            if p == 0:
                continue
            ratio = math.prod(den[b] / q[a, b] ** s for a, b in zip(x, y))
            total += p * min(1.0, c * ratio)
    return total


def e0_direct(t, rho, s):
    """``-log sum_{x,y} Q W (sum_x' Q(x') (q(x',y)/q(x,y))^s)^rho``."""
    W, q, Q = t.W, t.q, t.Q
    acc = 0.0
    for x in range(t.nx):
        for y in range(t.ny):
            if Q[x] * W[x, y] == 0:
                continue
            inner = sum(Q[xb] * (q[xb, y] / q[x, y]) ** s for xb in range(t.nx))
            acc += Q[x] * W[x, y] * inner**rho
    return -math.log(acc)


def gallager_e0(W, Q, rho):
    """Gallager's function for the matched decoder."""
    inner = (Q[:, None] * W ** (1.0 / (1.0 + rho))).sum(axis=0)
    return -math.log(float((inner ** (1.0 + rho)).sum()))


def brute_mu(costs, delta, Q, n):
    """Probability that an i.i.d. sequence meets every cost box, by enumeration."""
    costs = np.atleast_2d(costs)
    phi = costs @ Q
    total = 0.0
    for x in _sequences(len(Q), n):
        sums = costs[:, list(x)].sum(axis=1)
        if np.all(np.abs(sums - n * phi) <= delta * (1 + 1e-12)):
            total += math.prod(Q[a] for a in x)
    return total


def split_prefactor_quad(mu, var, rho, split=0.0, coef=1.0):
    """Numerical integral ``∫_split^∞ e^{-rho z} φ + coef ∫_-∞^split e^{(1-rho) z} φ``."""
    from scipy.integrate import quad
    from scipy.stats import norm

    sd = math.sqrt(var)
    f_up = lambda z: math.exp(-rho * z) * norm.pdf(z, mu, sd)
    f_lo = lambda z: math.exp((1 - rho) * z) * norm.pdf(z, mu, sd)
    a = quad(f_up, split, math.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
    b = quad(f_lo, -math.inf, split, epsabs=0, epsrel=1e-12, limit=200)[0]
    return a + coef * b


def split_prefactor_lattice(mu, var, rho, gamma, h, split=0.0, coef=1.0, terms=10**5):
    """Direct sum over ``z = gamma + i h`` for ``|i| <= terms / 2``."""
    i = np.arange(-terms // 2, terms // 2 + 1)
    z = gamma + i * h
    logphi = -0.5 * (z - mu) ** 2 / var - 0.5 * math.log(2 * math.pi * var)
    up = z >= split - 1e-12
    val = np.where(up, np.exp(-rho * z + logphi), coef * np.exp((1 - rho) * z + logphi))
    return h * float(val.sum())
