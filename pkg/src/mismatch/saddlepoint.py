"""Saddlepoint approximations to the finite-length bounds.

Each approximation is a prefactor times ``exp(-n (E0(rho) - rho R))`` at the
optimizing ``rho``. The prefactors are Gaussian integrals (non-lattice case)
or Gaussian-weighted sums over the lattice of ``n R - i_s^n`` (lattice case);
both are evaluated in the log domain so they stay finite for large ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtri

from .dmc_core import ChannelTriple
from .errors import DivergentPrefactorError, SingularTripleError, TargetUnreachable
from .exponents import er_iid, exponent_s
from .rates import gmi
from .tilted import SaddlepointParams, make_family, moments, rho_hat

WINDOW_SD = 40.0
LATTICE_CHUNK = 10**6
DIVERGENCE_TOL = 1e-6


@dataclass(frozen=True)
class ApproxResult:
    value: float
    prefactor: float
    exponent: float
    branch: str
    params: SaddlepointParams


def log_q_function(x):
    """``log Q(x)`` for the standard normal upper tail."""
    return log_ndtr(-np.asarray(x, dtype=float))


def q_function(x):
    return np.exp(log_q_function(x))


def q_inverse(eps: float) -> float:
    return float(-ndtri(eps))


def _log_gauss_integral(lo: float, hi: float, b: float, mu: float, var: float) -> float:
    """``log ∫_lo^hi e^{b z} φ(z; mu, var) dz`` with one of the limits infinite."""
    sd = math.sqrt(var)
    shift = mu + b * var
    scale = mu * b + 0.5 * var * b * b
    if math.isinf(hi):
        return scale + float(log_q_function((lo - shift) / sd))
    return scale + float(log_q_function((shift - hi) / sd))


def _log_lattice_sum(z0: float, h: float, b: float, mu: float, var: float, i_lo: float, i_hi: float) -> float:
    """``log sum_{i_lo <= i <= i_hi} h φ(z0 + i h; mu, var) e^{b (z0 + i h)}``.

    Completing the square turns the summand into a Gaussian centred at
    ``mu + b var``; only indices within ``WINDOW_SD`` standard deviations of
    the largest term in range are kept.
    """
    sd = math.sqrt(var)
    centre = mu + b * var
    scale = mu * b + 0.5 * var * b * b
    i_peak = (centre - z0) / h
    i_start = min(max(round(i_peak), i_lo), i_hi)
    dist = abs(z0 + i_start * h - centre)
    reach = math.sqrt(dist * dist + (WINDOW_SD * sd) ** 2)
    lo = max(i_lo, math.ceil((centre - reach - z0) / h))
    hi = min(i_hi, math.floor((centre + reach - z0) / h))
    lo, hi = int(min(lo, i_start)), int(max(hi, i_start))
    # fine spans at large n give long windows; accumulate in chunks to bound memory
    parts = []
    for a in range(lo, hi + 1, LATTICE_CHUNK):
        z = z0 + h * np.arange(a, min(a + LATTICE_CHUNK, hi + 1))
        parts.append(logsumexp(-0.5 * ((z - centre) / sd) ** 2))
    return scale + math.log(h) - 0.5 * math.log(2 * math.pi * var) + float(logsumexp(parts))


def _split_prefactor(p: SaddlepointParams, split: float, log_coef: float) -> float:
    """``∫_{split}^∞ e^{-rho z} φ + e^{log_coef} ∫_{-∞}^{split} e^{(1-rho) z} φ`` (or lattice sums)."""
    mu, var = p.n * p.c1, p.n * p.c2
    rho = p.rho
    if p.lattice.is_lattice:
        h, g = p.lattice.span, p.gamma_n
        x = (split - g) / h
        k = round(x)
        i_split = k if abs(x - k) < 1e-12 else math.ceil(x)
        upper = _log_lattice_sum(g, h, -rho, mu, var, i_split, math.inf)
        lower = _log_lattice_sum(g, h, 1.0 - rho, mu, var, -math.inf, i_split - 1)
    else:
        upper = _log_gauss_integral(split, math.inf, -rho, mu, var)
        lower = _log_gauss_integral(-math.inf, split, 1.0 - rho, mu, var)
    return float(np.exp(np.logaddexp(upper, log_coef + lower)))


def alpha_n(p: SaddlepointParams) -> float:
    """Prefactor approximating the single-letter union bound."""
    if p.n is None:
        raise ValueError("saddlepoint parameters need a block length")
    return _split_prefactor(p, 0.0, 0.0)


def beta_n(p: SaddlepointParams) -> float:
    """Prefactor approximating the refined union bound."""
    if p.n is None:
        raise ValueError("saddlepoint parameters need a block length")
    if p.c3 is None:
        raise SingularTripleError("singular triple")
    split = p.split_point()
    return _split_prefactor(p, split, -split)


def _params(triple: ChannelTriple, n: int, M, rate, s) -> SaddlepointParams:
    if (M is None) == (rate is None):
        raise ValueError("give exactly one of M or rate")
    R = math.log(M) / n if M is not None else float(rate)
    if s is None or s == "auto":
        s = exponent_s(triple, R)
    return rho_hat(make_family(triple, float(s)), R, n)


def _approx(p: SaddlepointParams, prefactor: float) -> ApproxResult:
    value = prefactor * math.exp(-p.n * p.exponent)
    return ApproxResult(value, prefactor, p.exponent, p.region, p)


def rcus_hat(triple: ChannelTriple, n: int, M=None, *, rate=None, s=None) -> ApproxResult:
    p = _params(triple, n, M, rate, s)
    return _approx(p, alpha_n(p))


def rcuss_hat(triple: ChannelTriple, n: int, M=None, *, rate=None, s=None) -> ApproxResult:
    p = _params(triple, n, M, rate, s)
    return _approx(p, beta_n(p))


def _interior_prefactor(p: SaddlepointParams, gamma: float | None) -> float:
    rho = p.rho
    if rho * (1 - rho) < DIVERGENCE_TOL:
        raise DivergentPrefactorError("diverges at endpoint")
    root = math.sqrt(2 * math.pi * p.n * p.c2)
    if not p.lattice.is_lattice:
        return 1.0 / (root * rho * (1 - rho))
    h = p.lattice.span
    up = math.exp(-rho * gamma) / -math.expm1(-rho * h)
    down = math.exp((1 - rho) * gamma) * math.exp(-(1 - rho) * h) / -math.expm1(-(1 - rho) * h)
    return h / root * (up + down)


def exact_asymptotics_prefactor(p: SaddlepointParams, which: str = "alpha") -> float:
    """Leading-order behaviour of ``alpha_n`` or ``beta_n`` at a fixed rate."""
    region = p.region
    if which == "alpha" or region in ("info", "above"):
        if region in ("below", "above"):
            return 1.0
        if region in ("critical", "info"):
            return 0.5
        return _interior_prefactor(p, p.gamma_n)
    if which != "beta":
        raise ValueError(f"unknown prefactor {which!r}")
    if p.c3 is None:
        raise SingularTripleError("singular triple")
    base = p.psi / math.sqrt(2 * math.pi * p.n * p.c3)
    if region == "below":
        return base
    if region == "critical":
        return 0.5 * base
    gamma = None
    if p.lattice.is_lattice:
        gamma = p.gamma_n + p.i_star * p.lattice.span - p.split_point()
    return base**p.rho * _interior_prefactor(p, gamma)


def normal_approx_rate(triple: ChannelTriple, n: int, eps: float, s=None, with_log_term: bool = False) -> float:
    """``I_s - sqrt(U_s / n) Q^{-1}(eps)`` in nats, optionally plus ``log(n) / (2n)``.

    ``s=None`` uses the GMI-achieving ``s``.
    """
    s = gmi(triple).s_star if s is None else float(s)
    I, U, _ = moments(make_family(triple, s))
    r = I - math.sqrt(U / n) * q_inverse(eps)
    if with_log_term:
        r += 0.5 * math.log(n) / n
    return r


def normal_approx_pe(triple: ChannelTriple, n: int, rate: float, s=None) -> float:
    """Error probability implied by the normal approximation at ``rate`` (nats)."""
    s = gmi(triple).s_star if s is None else float(s)
    I, U, _ = moments(make_family(triple, s))
    return float(q_function(math.sqrt(n / U) * (I - rate)))


def exponent_approx(triple: ChannelTriple, n: int, rate: float) -> float:
    """``exp(-n E_r(R))`` with the i.i.d. exponent."""
    return math.exp(-n * er_iid(triple, rate).value)


def rate_for_epsilon(
    evaluator: Callable[[ChannelTriple, int, float], float],
    triple: ChannelTriple,
    n: int,
    eps: float,
    lo: float | None = None,
    hi: float | None = None,
    tol: float = 1e-7,
) -> float:
    """Largest rate (nats) whose error-probability estimate stays at or below ``eps``.

    ``evaluator(triple, n, rate)`` must be nondecreasing in ``rate``; the
    search is a bisection on ``[lo, hi]``. ``lo`` defaults to two codewords
    (``log(2) / n``) and ``hi`` to ``log |X|``.
    """
    lo = math.log(2) / n if lo is None else lo
    hi = math.log(triple.nx) if hi is None else hi
    f = lambda r: evaluator(triple, n, r)
    if f(lo) > eps:
        raise TargetUnreachable("target unreachable")
    if f(hi) <= eps:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) <= eps:
            lo = mid
        else:
            hi = mid
    return lo
