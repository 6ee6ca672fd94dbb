import math

import numpy as np
import pytest
from hypothesis import strategies as st

from mismatch.dmc_core import hamming_metric, row_symmetric_channel, validate

LN2 = math.log(2)
DELTAS = (0.01, 0.05, 0.25)

# PASS/FAIL lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def three_ary(Q, metric="hamming"):
    W = row_symmetric_channel(DELTAS)
    q = hamming_metric(3, 0.05) if metric == "hamming" else W
    return validate(W, q, np.asarray(Q, dtype=float))


@pytest.fixture(scope="session")
def mismatched():
    """Three-ary channel, Hamming metric, nonuniform input law."""
    return three_ary([0.1, 0.3, 0.6])


@pytest.fixture(scope="session")
def mismatched_uniform():
    return three_ary(np.ones(3) / 3)


@pytest.fixture(scope="session")
def symmetric_ml():
    W = row_symmetric_channel([0.1, 0.1, 0.1])
    return validate(W, W, np.ones(3) / 3)


@pytest.fixture(scope="session")
def toy():
    W = np.array([[0.9, 0.1], [0.2, 0.8]])
    q = np.array([[0.7, 0.3], [0.4, 0.6]])
    return validate(W, q, np.array([0.4, 0.6]))


@pytest.fixture(scope="session")
def bec():
    W = np.array([[0.9, 0.1, 0.0], [0.0, 0.1, 0.9]])
    return validate(W, W, np.array([0.5, 0.5]))


@st.composite
def triples(draw, nx=st.integers(2, 3), ny=st.integers(2, 3), positive=True):
    """Random (W, q, Q) with strictly positive entries by default."""
    a, b = draw(nx), draw(ny)
    lo = 0.05 if positive else 0.0
    cell = st.floats(lo, 1.0, allow_nan=False)
    W = np.array([[draw(cell) for _ in range(b)] for _ in range(a)])
    W[W.sum(axis=1) == 0, 0] = 1.0
    W /= W.sum(axis=1, keepdims=True)
    q = np.array([[draw(st.floats(0.05, 1.0)) for _ in range(b)] for _ in range(a)])
    Q = np.array([draw(st.floats(0.1, 1.0)) for _ in range(a)])
    return validate(W, q, Q / Q.sum())
