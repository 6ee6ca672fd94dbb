"""Tilted information density and the quantities derived from it.

For a metric exponent ``s >= 0`` and an input cost vector ``a`` the density is

    i(x, y) = s log q(x, y) + a(x) - log sum_x' Q(x') q(x', y)^s exp(a(x')).

Under ``Q x W`` its mean, variance and cumulant function drive the rates,
the saddlepoint parameters and the exact-asymptotics prefactors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .dmc_core import ChannelTriple, assumption_report
from .errors import ChannelError, DegenerateStatisticError

LATTICE_TOL = 1e-9
LATTICE_MAX_DENOMINATOR = 1000
REGION_TOL = 1e-12


@dataclass(frozen=True)
class DiscretePmf:
    """Finite pmf on sorted real support.

    ``grid = (origin, step)`` is set when every support point equals
    ``origin + k * step`` for an integer ``k``.
    """

    support: np.ndarray
    mass: np.ndarray
    grid: tuple[float, float] | None = None

    def mean(self) -> float:
        return float(self.mass @ self.support)

    def var(self) -> float:
        return float(self.mass @ (self.support - self.mean()) ** 2)


@dataclass(frozen=True)
class LatticeInfo:
    kind: str  # "lattice", "nonlattice" or "degenerate"
    span: float = 0.0
    offset: float = 0.0

    @property
    def is_lattice(self) -> bool:
        return self.kind == "lattice"


def scaled_log_metric(s: float, log_q: np.ndarray) -> np.ndarray:
    """``s * log q`` with the convention ``0 * log 0 = 0``."""
    if s < 0:
        raise ValueError("metric exponent s must be nonnegative")
    if s == 0:
        return np.zeros_like(log_q)
    return s * log_q


def log_tilted_denominator(triple: ChannelTriple, s: float, a: np.ndarray) -> np.ndarray:
    """``log sum_x Q(x) q(x, y)^s exp(a(x))`` for every output ``y``."""
    with np.errstate(divide="ignore"):
        lQ = np.log(triple.Q)
    return logsumexp(lQ[:, None] + scaled_log_metric(s, triple.log_q) + a[:, None], axis=0)


@dataclass(frozen=True, eq=False)
class TiltedFamily:
    triple: ChannelTriple
    s: float
    a: np.ndarray
    density: np.ndarray  # meaningful on triple.support only
    log_den: np.ndarray

    @cached_property
    def values(self) -> np.ndarray:
        """Density values on the support, flattened in row-major order."""
        return self.density[self.triple.support]

    @cached_property
    def weights(self) -> np.ndarray:
        return self.triple.joint.P[self.triple.support]

    @cached_property
    def reverse(self) -> np.ndarray:
        """Reverse-channel law ``Q(x) q^s e^a / den`` as an ``(nx, ny)`` array."""
        t = self.triple
        with np.errstate(divide="ignore"):
            lQ = np.log(t.Q)
        logp = lQ[:, None] + scaled_log_metric(self.s, t.log_q) + self.a[:, None] - self.log_den[None, :]
        return np.exp(logp)

    def pmf(self) -> DiscretePmf:
        return merge_atoms(self.values, self.weights)


def make_family(triple: ChannelTriple, s: float, a=None) -> TiltedFamily:
    a = np.zeros(triple.nx) if a is None else np.asarray(a, dtype=float)
    if a.shape != (triple.nx,):
        raise ChannelError("cost vector has the wrong length")
    log_den = log_tilted_denominator(triple, s, a)
    if np.any(np.isneginf(log_den[triple.output_support])):
        raise ChannelError("tilted denominator vanishes at a reachable output")
    with np.errstate(invalid="ignore"):
        dens = scaled_log_metric(s, triple.log_q) + a[:, None] - log_den[None, :]
    dens = np.where(triple.support, dens, np.nan)
    dens.setflags(write=False)
    return TiltedFamily(triple, float(s), a, dens, log_den)


def merge_atoms(values, mass, tol: float = 1e-12) -> DiscretePmf:
    """Sort atoms and merge those closer than ``tol`` (relative to magnitude)."""
    values = np.asarray(values, dtype=float)
    mass = np.asarray(mass, dtype=float)
    order = np.argsort(values, kind="stable")
    v, m = values[order], mass[order]
    if v.size == 0:
        return DiscretePmf(v, m)
    gaps = np.diff(v)
    new = np.r_[True, gaps > tol * np.maximum(1.0, np.abs(v[1:]))]
    starts = np.flatnonzero(new)
    mm = np.add.reduceat(m, starts)
    return DiscretePmf(v[starts], mm)


def moments(f: TiltedFamily) -> tuple[float, float, float]:
    """Mean ``I``, variance ``U`` and conditional variance ``V`` of the density."""
    t = f.triple
    P = t.joint.P
    d = np.where(t.support, f.density, 0.0)
    I = float(np.sum(P * d))
    U = float(np.sum(P * (d - I) ** 2))
    V = 0.0
    for x in np.flatnonzero(t.input_support):
        w = t.W[x]
        row = d[x]
        m = w @ row
        V += t.Q[x] * float(w @ (row - m) ** 2)
    return I, U, V


def e0_derivatives(f: TiltedFamily, rho: float) -> tuple[float, float, float]:
    """``E0(rho) = -log E[exp(-rho i)]`` with its first two derivatives."""
    v, p = f.values, f.weights
    logw = np.log(p) - rho * v
    lse = logsumexp(logw)
    w = np.exp(logw - lse)
    m1 = float(w @ v)
    m2 = float(w @ (v - m1) ** 2)
    return -float(lse), m1, -m2


def e0_iid_at(triple: ChannelTriple, s: float, rho: float) -> float:
    return e0_derivatives(make_family(triple, s), rho)[0]


def detect_lattice(values, tol: float = LATTICE_TOL, max_den: int = LATTICE_MAX_DENOMINATOR) -> LatticeInfo:
    """Largest span ``h`` with ``values ⊂ offset + h Z``, found by rational reconstruction.

    >>> detect_lattice([-1.2, 0.3, 1.8]).span
    1.5
    """
    v = np.unique(np.asarray(values, dtype=float))
    v = merge_atoms(v, np.ones_like(v), tol).support
    if v.size <= 1:
        return LatticeInfo("degenerate", 0.0, float(v[0]) if v.size else 0.0)
    d = v[1:] - v[0]
    g = float(np.min(np.diff(v)))
    fracs = [Fraction(float(r)).limit_denominator(max_den) for r in d / g]
    den = reduce(math.lcm, (fr.denominator for fr in fracs), 1)
    # a large common denominator means the span collapsed below the residual tolerance
    if den > max_den:
        return LatticeInfo("nonlattice")
    nums = [int(fr * den) for fr in fracs]
    h = g * reduce(math.gcd, nums) / den
    resid = np.abs(d - h * np.round(d / h))
    if np.any(resid > tol):
        return LatticeInfo("nonlattice")
    return LatticeInfo("lattice", h, float(np.mod(v[0], h)) % h)


@dataclass(frozen=True)
class SaddlepointParams:
    rate: float
    s: float
    rho: float
    e0: float
    c1: float
    c2: float
    critical_rate: float
    info: float
    lattice: LatticeInfo  # of rate - density
    c3: float | None = None
    psi: float | None = None
    n: int | None = None
    gamma_n: float | None = None
    i_star: int | None = None

    @property
    def exponent(self) -> float:
        return self.e0 - self.rho * self.rate

    @property
    def region(self) -> str:
        """One of ``below``, ``critical``, ``interior``, ``info``, ``above``."""
        tol = REGION_TOL * max(1.0, abs(self.rate))
        if self.rate < self.critical_rate - tol:
            return "below"
        if self.rate <= self.critical_rate + tol:
            return "critical"
        if self.rate < self.info - tol:
            return "interior"
        if self.rate <= self.info + tol:
            return "info"
        return "above"

    def split_point(self) -> float:
        """``log(sqrt(2 pi n c3) / psi)``, where the refined bound's two regimes meet."""
        return 0.5 * math.log(2 * math.pi * self.n * self.c3) - math.log(self.psi)


def refined_constants(f: TiltedFamily, rho: float) -> tuple[float, float] | None:
    """``(c3, psi)`` for the refined union bound, or ``None`` if assumptions fail."""
    t = f.triple
    rep = assumption_report(t)
    if not (rep.regular and rep.nonsingular):
        return None
    tilt = np.where(t.support, t.joint.P * np.exp(-rho * np.where(t.support, f.density, 0.0)), 0.0)
    py_star = tilt.sum(axis=0) / tilt.sum()
    rev = f.reverse
    c3 = 0.0
    for y in np.flatnonzero(t.output_support):
        m = rev[:, y] > 0
        i = scaled_log_metric(f.s, t.log_q[m, y]) + f.a[m] - f.log_den[y]
        w = rev[m, y]
        mu = w @ i
        c3 += py_star[y] * float(w @ (i - mu) ** 2)
    y1 = list(rep.y1)
    vals = f.density[:, y1][t.support[:, y1]]
    lat = detect_lattice(vals)
    psi = lat.span / -math.expm1(-lat.span) if lat.is_lattice else 1.0
    return c3, psi


def rho_hat(f: TiltedFamily, rate: float, n: int | None = None) -> SaddlepointParams:
    """Maximize ``E0(rho) - rho * rate`` over ``[0, 1]`` and collect the saddlepoint constants.

    The objective is concave, so the maximizer is found as the root of its
    derivative (or at an endpoint when the derivative does not change sign).
    """
    _, info, _ = e0_derivatives(f, 0.0)
    _, rcr, _ = e0_derivatives(f, 1.0)
    if rate >= info:
        rho = 0.0
    elif rate <= rcr:
        rho = 1.0
    else:
        rho = brentq(lambda r: e0_derivatives(f, r)[1] - rate, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    e0, d1, d2 = e0_derivatives(f, rho)
    c2 = -d2
    if not c2 > 0:
        raise DegenerateStatisticError("degenerate statistic")
    lat = detect_lattice(rate - f.values)
    c3 = psi = gamma_n = i_star = None
    refined = refined_constants(f, rho)
    if refined is not None:
        c3, psi = refined
    if n is not None and lat.is_lattice:
        gamma_n = math.fmod(n * lat.offset, lat.span)
    params = SaddlepointParams(rate, f.s, float(rho), e0, rate - d1, c2, rcr, info, lat, c3, psi, n, gamma_n)
    if gamma_n is not None and c3 is not None:
        x = (params.split_point() - gamma_n) / lat.span
        k = round(x)
        i_star = k if abs(x - k) < 1e-12 else math.ceil(x)
        params = SaddlepointParams(**{**params.__dict__, "i_star": int(i_star)})
    return params
