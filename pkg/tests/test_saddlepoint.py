import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mismatch.errors import DivergentPrefactorError, SingularTripleError, TargetUnreachable
from mismatch.exponents import exponent_s
from mismatch.finite_bounds import rcus_exact
from mismatch.rates import gmi
from mismatch.saddlepoint import (
    alpha_n,
    beta_n,
    exact_asymptotics_prefactor,
    exponent_approx,
    normal_approx_pe,
    normal_approx_rate,
    q_function,
    q_inverse,
    rate_for_epsilon,
    rcus_hat,
    rcuss_hat,
)
from mismatch.tilted import e0_derivatives, make_family, moments, rho_hat

from conftest import LN2
from oracles import split_prefactor_lattice, split_prefactor_quad


def _family_and_rates(t, s):
    f = make_family(t, s)
    _, info, _ = e0_derivatives(f, 0.0)
    _, rcr, _ = e0_derivatives(f, 1.0)
    return f, rcr, info


@pytest.fixture(scope="module")
def nonlattice(mismatched):
    return _family_and_rates(mismatched, 0.6)


@pytest.fixture(scope="module")
def lattice(mismatched_uniform):
    return _family_and_rates(mismatched_uniform, 0.5)


@pytest.mark.parametrize("where", [0.5, 0.2, 1.5])
def test_alpha_nonlattice_matches_quadrature(nonlattice, where):
    f, rcr, info = nonlattice
    R = rcr + where * (info - rcr) / 2 if where < 1 else info + 0.05
    p = rho_hat(f, R, 50)
    assert p.lattice.kind == "nonlattice"
    assert alpha_n(p) == pytest.approx(split_prefactor_quad(50 * p.c1, 50 * p.c2, p.rho), rel=1e-9)
    split = p.split_point()
    ref = split_prefactor_quad(50 * p.c1, 50 * p.c2, p.rho, split, math.exp(-split))
    assert beta_n(p) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("n", [30, 31, 200])
def test_lattice_sums_match_reference(lattice, n):
    f, rcr, info = lattice
    p = rho_hat(f, 0.5 * (rcr + info), n)
    lat = p.lattice
    assert lat.is_lattice
    ref = split_prefactor_lattice(n * p.c1, n * p.c2, p.rho, p.gamma_n, lat.span)
    assert alpha_n(p) == pytest.approx(ref, rel=1e-12)
    split = p.split_point()
    ref_b = split_prefactor_lattice(n * p.c1, n * p.c2, p.rho, p.gamma_n, lat.span, split, math.exp(-split))
    assert beta_n(p) == pytest.approx(ref_b, rel=1e-12)


def test_alpha_below_critical_tends_to_one(mismatched_uniform):
    R = 0.05
    f = make_family(mismatched_uniform, exponent_s(mismatched_uniform, R))
    p = rho_hat(f, R, 10**4)
    assert p.region == "below"
    assert abs(alpha_n(p) - 1) < 0.02


def test_alpha_at_critical_tends_to_half(nonlattice):
    f, rcr, _ = nonlattice
    p = rho_hat(f, rcr, 10**4)
    assert p.region == "critical"
    assert abs(alpha_n(p) - 0.5) < 0.03


def test_alpha_interior_asymptote(nonlattice):
    f, rcr, info = nonlattice
    n = 10**5
    p = rho_hat(f, 0.5 * (rcr + info), n)
    assert alpha_n(p) * math.sqrt(2 * math.pi * n * p.c2) * p.rho * (1 - p.rho) == pytest.approx(1.0, abs=0.02)
    assert exact_asymptotics_prefactor(p, "alpha") / alpha_n(p) == pytest.approx(1.0, abs=0.02)


def test_alpha_lattice_asymptote(lattice):
    f, rcr, info = lattice
    p = rho_hat(f, 0.5 * (rcr + info), 10**5)
    assert exact_asymptotics_prefactor(p, "alpha") / alpha_n(p) == pytest.approx(1.0, abs=0.02)


def test_beta_below_critical(mismatched_uniform):
    R = 0.05
    f = make_family(mismatched_uniform, exponent_s(mismatched_uniform, R))
    n = 10**4
    p = rho_hat(f, R, n)
    base = p.psi / math.sqrt(2 * math.pi * n * p.c3)
    assert exact_asymptotics_prefactor(p, "beta") == base
    assert beta_n(p) / base == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("which", ["nonlattice", "lattice"])
def test_beta_interior_asymptote(which, request):
    f, rcr, info = request.getfixturevalue(which)
    p = rho_hat(f, 0.5 * (rcr + info), 10**5)
    assert exact_asymptotics_prefactor(p, "beta") / beta_n(p) == pytest.approx(1.0, abs=0.03)


def test_beta_matches_alpha_above_information(lattice):
    f, _, info = lattice
    p = rho_hat(f, info + 0.05, 10**4)
    assert beta_n(p) / alpha_n(p) == pytest.approx(1.0, abs=0.01)


def test_endpoint_divergence(nonlattice):
    f, rcr, info = nonlattice
    near = rho_hat(f, rcr + 1e-3, 10**4)
    mid = rho_hat(f, 0.5 * (rcr + info), 10**4)
    big = exact_asymptotics_prefactor(near, "alpha")
    assert math.isfinite(big) and big > 5 * exact_asymptotics_prefactor(mid, "alpha")
    edge = dataclasses.replace(mid, rho=1 - 1e-8)
    with pytest.raises(DivergentPrefactorError, match="diverges at endpoint"):
        exact_asymptotics_prefactor(edge, "alpha")


def test_alpha_continuous_across_boundaries(nonlattice):
    f, rcr, info = nonlattice
    for R in (rcr, info):
        lo, hi = rho_hat(f, R - 1e-9, 100), rho_hat(f, R + 1e-9, 100)
        assert alpha_n(lo) == pytest.approx(alpha_n(hi), rel=1e-5)
        assert beta_n(lo) == pytest.approx(beta_n(hi), rel=1e-5)


def test_branch_selection(mismatched, mismatched_uniform):
    assert rcus_hat(mismatched, 60, rate=0.2).params.lattice.kind == "nonlattice"
    assert rcus_hat(mismatched_uniform, 60, rate=0.2).params.lattice.kind == "lattice"


def test_rcus_hat_nonuniform_default_s(mismatched):
    R = 0.3 * LN2
    a = rcus_hat(mismatched, 60, rate=R)
    assert a.params.lattice.kind == "nonlattice"
    assert a.value / rcus_exact(mismatched, 60, rate=R).value == pytest.approx(1.0, abs=0.05)


def test_fine_span_lattice_sum_matches_integral(lattice):
    # a tiny span turns the lattice sum into a Riemann sum of the Gaussian integral
    f, rcr, info = lattice
    p = rho_hat(f, 0.5 * (rcr + info), 10**5)
    lat = dataclasses.replace(p.lattice, span=1e-4, offset=0.0)
    fine = dataclasses.replace(p, lattice=lat, gamma_n=0.0)
    smooth = dataclasses.replace(p, lattice=dataclasses.replace(lat, kind="nonlattice"))
    assert alpha_n(fine) == pytest.approx(alpha_n(smooth), rel=1e-4)


def test_gamma_periodicity(lattice):
    f, rcr, info = lattice
    p0 = rho_hat(f, 0.5 * (rcr + info), 10)
    h = p0.lattice.span
    R = p0.rate + (h / 4 - p0.lattice.offset)
    g = [rho_hat(f, R, n).gamma_n for n in (10, 14, 18)]
    assert g[0] == pytest.approx(g[1], abs=1e-9)
    assert g[1] == pytest.approx(g[2], abs=1e-9)


def test_result_invariants(mismatched_uniform):
    for R in (0.05, 0.2, 0.5):
        a = rcus_hat(mismatched_uniform, 60, rate=R)
        assert a.prefactor > 0
        assert a.value == pytest.approx(a.prefactor * math.exp(-60 * a.exponent), rel=1e-14)


def test_rcus_hat_tracks_exact(mismatched_uniform):
    for n in (40, 80):
        for Rb in np.linspace(0.1, 0.6, 6):
            R = Rb * LN2
            s = exponent_s(mismatched_uniform, R)
            r = rcus_hat(mismatched_uniform, n, rate=R, s=s).value / rcus_exact(mismatched_uniform, n, rate=R, s=s).value
            assert 0.9 <= r <= 1.1


def test_rcuss_hat_below_rcus_hat(mismatched_uniform):
    for n in (60, 200):
        for R in np.linspace(0.1, 0.6, 6) * LN2:
            s = exponent_s(mismatched_uniform, R)
            assert rcuss_hat(mismatched_uniform, n, rate=R, s=s).value <= 1.05 * rcus_hat(mismatched_uniform, n, rate=R, s=s).value


def test_rcus_hat_above_information(mismatched_uniform):
    s = 0.5
    info = moments(make_family(mismatched_uniform, s))[0]
    v = rcus_hat(mismatched_uniform, 10**4, rate=info + 0.01, s=s).value
    assert 0.5 <= v <= 1


def test_rcuss_hat_singular(bec):
    with pytest.raises(SingularTripleError, match="singular triple"):
        rcuss_hat(bec, 50, rate=0.2, s=1.0)


def test_normal_rate_at_half(mismatched):
    s = gmi(mismatched).s_star
    I = moments(make_family(mismatched, s))[0]
    assert normal_approx_rate(mismatched, 100, 0.5) == I
    assert normal_approx_rate(mismatched, 100, 0.5, with_log_term=True) == I + 0.5 * math.log(100) / 100
    assert normal_approx_rate(mismatched, 10**12, 1e-3) == pytest.approx(I, abs=1e-5)
    assert normal_approx_pe(mismatched, 100, I) == 0.5


def test_q_function_accuracy():
    x = np.linspace(-8, 37, 400)
    ref = np.array([0.5 * math.erfc(v / math.sqrt(2)) for v in x])
    np.testing.assert_allclose(q_function(x), ref, rtol=1e-12)
    for v in (-3.0, 0.0, 1.0, 5.0, 12.0, 30.0):
        assert q_inverse(float(q_function(v))) == pytest.approx(v, rel=1e-10, abs=1e-12)


def test_rate_for_epsilon_matches_m_scan(toy):
    n, eps, s = 20, 0.3, 0.8
    ev = lambda t, n_, R: rcus_exact(t, n_, rate=R, s=s).value
    R = rate_for_epsilon(ev, toy, n, eps, tol=1e-12)
    M = 2
    while rcus_exact(toy, n, M + 1, s=s).value <= eps:
        M += 1
    assert math.log(M) / n <= R + 1e-9
    assert R < math.log(M + 1) / n


def test_rate_for_epsilon_unreachable(toy):
    ev = lambda t, n, R: rcus_exact(t, n, rate=R, s=0.8).value
    with pytest.raises(TargetUnreachable, match="target unreachable"):
        rate_for_epsilon(ev, toy, 4, 1e-9)


def test_rate_for_epsilon_large_eps(mismatched):
    s = 0.6
    info = moments(make_family(mismatched, s))[0]
    ev = lambda t, n, R: rcus_hat(t, n, rate=R, s=s).value
    assert rate_for_epsilon(ev, mismatched, 200, 0.9) >= info - 0.01


def test_exponent_approx(mismatched, mismatched_uniform):
    g = gmi(mismatched).value
    assert exponent_approx(mismatched, 100, g + 0.01) == 1.0
    R = 0.2
    a, b = exponent_approx(mismatched, 50, R), exponent_approx(mismatched, 100, R)
    assert math.log(b) == pytest.approx(2 * math.log(a), rel=1e-14)
    R = 0.15 * LN2
    r = exponent_approx(mismatched_uniform, 60, R) / rcus_exact(mismatched_uniform, 60, rate=R).value
    assert 1 / 3 <= r <= 3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(5, 2000))
def test_prefactor_positive_and_bounded(u, n):
    from conftest import three_ary

    t = three_ary([0.1, 0.3, 0.6])
    f = make_family(t, 0.6)
    _, info, _ = e0_derivatives(f, 0.0)
    p = rho_hat(f, u * 1.2 * info, n)
    a = alpha_n(p)
    assert 0 < a <= 1 + 1e-12
    assert beta_n(p) > 0
