"""Channel, decoding metric and input distribution.

A :class:`ChannelTriple` bundles a DMC ``W[x, y]``, a nonnegative metric
``q[x, y]`` (larger is better for the decoder) and an input pmf ``Q``.
Everything downstream takes a validated triple; arrays are stored
read-only so triples can be shared freely between threads and processes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ChannelError, ConfigError

STOCHASTIC_TOL = 1e-12
METRIC_EQ_RTOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChannelTriple:
    W: np.ndarray
    q: np.ndarray
    Q: np.ndarray

    @property
    def nx(self) -> int:
        return self.W.shape[0]

    @property
    def ny(self) -> int:
        return self.W.shape[1]

    @cached_property
    def joint(self) -> "JointDist":
        return joint(self)

    @cached_property
    def log_q(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return _frozen(np.log(self.q))

    @cached_property
    def support(self) -> np.ndarray:
        """Mask of pairs with ``Q(x) W(y|x) > 0``."""
        m = self.joint.P > 0
        m.setflags(write=False)
        return m

    @cached_property
    def input_support(self) -> np.ndarray:
        m = self.Q > 0
        m.setflags(write=False)
        return m

    @cached_property
    def output_support(self) -> np.ndarray:
        m = self.joint.PY > 0
        m.setflags(write=False)
        return m


@dataclass(frozen=True, eq=False)
class JointDist:
    P: np.ndarray
    PY: np.ndarray


@dataclass(frozen=True)
class AssumptionReport:
    regular: bool
    nonsingular: bool
    y1: tuple[int, ...]
    notes: tuple[str, ...] = ()


def validate(W, q, Q) -> ChannelTriple:
    """Check shapes and stochasticity, renormalizing rows within tolerance.

    Raises
    ------
    ChannelError
        With message ``"row not stochastic"``, ``"negative metric"`` or a
        shape/finiteness complaint.
    """
    W = np.asarray(W, dtype=float)
    q = np.asarray(q, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if W.ndim != 2 or W.size == 0:
        raise ChannelError("W must be a nonempty matrix")
    if q.shape != W.shape:
        raise ChannelError(f"metric shape {q.shape} does not match channel shape {W.shape}")
    if Q.shape != (W.shape[0],):
        raise ChannelError(f"input distribution has length {Q.size}, expected {W.shape[0]}")
    for name, arr in (("W", W), ("q", q), ("Q", Q)):
        if not np.all(np.isfinite(arr)):
            raise ChannelError(f"{name} has non-finite entries")
    if np.any(W < 0):
        x, y = np.argwhere(W < 0)[0]
        raise ChannelError(f"row not stochastic: W[{x}, {y}] is negative")
    if np.any(q < 0):
        x, y = np.argwhere(q < 0)[0]
        raise ChannelError(f"negative metric at q[{x}, {y}]")
    if np.any(Q < 0):
        raise ChannelError(f"input distribution not stochastic: Q[{np.flatnonzero(Q < 0)[0]}] is negative")
    if abs(Q.sum() - 1.0) > STOCHASTIC_TOL:
        raise ChannelError(f"input distribution not stochastic: sums to {float(Q.sum())!r}")
    rows = W.sum(axis=1)
    bad = np.flatnonzero(np.abs(rows - 1.0) > STOCHASTIC_TOL)
    if bad.size:
        raise ChannelError(f"row not stochastic: row {bad[0]} sums to {float(rows[bad[0]])!r}")
    return ChannelTriple(_frozen(W / rows[:, None]), _frozen(q), _frozen(Q / Q.sum()))


def joint(triple: ChannelTriple) -> JointDist:
    P = triple.Q[:, None] * triple.W
    return JointDist(_frozen(P), _frozen(P.sum(axis=0)))


def output_set_y1(triple: ChannelTriple) -> tuple[int, ...]:
    """Outputs where two inputs reachable under ``Q x W`` get different metrics."""
    out = []
    for y in range(triple.ny):
        xs = np.flatnonzero(triple.support[:, y])
        vals = triple.q[xs, y]
        if vals.size > 1 and not np.allclose(vals, vals[0], rtol=METRIC_EQ_RTOL, atol=0.0):
            out.append(y)
    return tuple(out)


def assumption_report(triple: ChannelTriple) -> AssumptionReport:
    xs = triple.input_support
    ys = triple.output_support
    W = triple.W[np.ix_(xs, ys)]
    q = triple.q[np.ix_(xs, ys)]
    regular = bool(np.array_equal(W > 0, q > 0))
    y1 = output_set_y1(triple)
    notes = []
    if not regular:
        notes.append("metric and channel have different zero patterns")
    if not y1:
        notes.append("metric is constant across reachable inputs at every output")
    return AssumptionReport(regular, bool(y1), y1, tuple(notes))


def hamming_metric(k: int, delta: float) -> np.ndarray:
    """Square metric with ``1 - (k-1) delta`` on the diagonal and ``delta`` elsewhere."""
    m = np.full((k, k), float(delta))
    np.fill_diagonal(m, 1.0 - (k - 1) * delta)
    return m


def row_symmetric_channel(deltas) -> np.ndarray:
    """Square channel whose row ``x`` keeps ``1 - (k-1) delta_x`` on ``y = x``."""
    d = np.asarray(deltas, dtype=float)
    k = d.size
    W = np.repeat(d[:, None], k, axis=1)
    np.fill_diagonal(W, 1.0 - (k - 1) * d)
    return W


def triple_from_config(cfg: dict[str, Any]) -> ChannelTriple:
    """Build a triple from a parsed config mapping.

    ``q`` may be a matrix, the string ``"ML"`` (metric equals the channel) or
    ``{"hamming": delta}``.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    missing = [k for k in ("W", "q", "Q") if k not in cfg]
    if missing:
        raise ConfigError(f"config missing fields: {', '.join(missing)}")
    try:
        W = np.asarray(cfg["W"], dtype=float)
        Q = np.asarray(cfg["Q"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric W or Q: {exc}") from None
    spec = cfg["q"]
    if isinstance(spec, str):
        if spec != "ML":
            raise ConfigError(f"unknown metric {spec!r}")
        q = W.copy()
    elif isinstance(spec, dict):
        if set(spec) != {"hamming"}:
            raise ConfigError("metric object must be {\"hamming\": delta}")
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ChannelError("hamming metric needs a square channel")
        q = hamming_metric(W.shape[0], float(spec["hamming"]))
    else:
        try:
            q = np.asarray(spec, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"non-numeric metric: {exc}") from None
    return validate(W, q, Q)


def load_config(path: str | Path) -> ChannelTriple:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc.msg} at line {exc.lineno}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return triple_from_config(cfg)
