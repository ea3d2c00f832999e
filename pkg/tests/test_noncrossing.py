import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cklab import noncrossing as nc
from cklab.errors import InvalidArgumentError, ResourceLimitError
from cklab.model import MixturePolynomial


def _all_pairings(elems):
    if not elems:
        yield ()
        return
    a = elems[0]
    for k in range(1, len(elems)):
        rest = elems[1:k] + elems[k + 1:]
        for tail in _all_pairings(rest):
            yield ((a, elems[k]),) + tail


def _crosses(pairs):
    return any(a < c < b < d for (a, b), (c, d) in itertools.permutations(pairs, 2))


@pytest.mark.parametrize("n,count", [(1, 1), (2, 2), (3, 5), (4, 14), (5, 42), (6, 132)])
def test_counts_are_catalan(n, count):
    assert len(nc.enumerate_nc(n)) == count == nc.catalan(n)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_enumeration_matches_brute_force(n):
    brute = {tuple(sorted(p)) for p in _all_pairings(list(range(1, 2 * n + 1))) if not _crosses(p)}
    got = {p.pairs for p in nc.enumerate_nc(n)}
    assert got == brute


@given(st.integers(1, 7))
def test_pairings_are_fixed_point_free_involutions(n):
    out = nc.enumerate_nc(n)
    sigmas = [p.sigma for p in out]
    assert sigmas == sorted(sigmas)
    assert len(set(sigmas)) == len(sigmas)
    for p in out:
        s = p.sigma
        assert p.is_valid()
        assert all(s[s[i] - 1] == i + 1 and s[i] != i + 1 for i in range(2 * n))
        assert p.crossing_representatives == tuple(i + 1 for i in range(2 * n) if i + 1 < s[i])


def test_enumeration_limits():
    with pytest.raises(ResourceLimitError):
        nc.enumerate_nc(nc.MAX_ENUM_N + 1)
    with pytest.raises(InvalidArgumentError):
        nc.enumerate_nc(0)


def test_catalan_large_is_exact():
    assert nc.catalan(30) == 3814986502092304
    assert nc.catalan(200) == math.comb(400, 200) // 201


def test_semicircle_constant_and_bound():
    assert nc.semicircle_constant() == pytest.approx(1.0)
    th = np.linspace(0, 50, 501)
    assert np.all(nc.semicircle_mgf(th) <= nc.semicircle_bound(th) * (1 + 1e-12))


def test_semicircle_mgf_moments():
    # E exp(theta X) = sum Catalan(n) theta^{2n} / (2n)!
    for th in (0.1, 0.7, 2.0):
        series = sum(nc.catalan(n) * th ** (2 * n) / math.factorial(2 * n) for n in range(40))
        assert nc.semicircle_mgf(th) == pytest.approx(series, rel=1e-12)


def test_series_tail():
    x = 1.3
    exact = math.cosh(x) - sum(x ** (2 * n) / math.factorial(2 * n) for n in range(6))
    assert nc.series_tail(x, 5) == pytest.approx(exact, rel=1e-10)
    assert nc.series_tail(0.0, 3) == 0.0


def _const_C(n):
    return np.ones((n + 1, n + 1))


def test_series_orders_constant_kernel_give_catalan():
    mix = MixturePolynomial.pure(2, 1.0)
    dt, T = 0.005, 1.0
    n = int(T / dt)
    coef = nc.h_series_orders(_const_C(n), mix, T, 0.0, dt, 5)
    exact = [nc.catalan(k) * T ** (2 * k) / math.factorial(2 * k) for k in range(6)]
    np.testing.assert_allclose(coef, exact, rtol=2e-3, atol=1e-9)


def test_series_refinement_is_second_order():
    mix = MixturePolynomial.pure(2, 1.0)
    T = 1.0
    exact = nc.catalan(3) * T**6 / math.factorial(6)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        n = int(round(T / dt))
        errs.append(abs(nc.h_series_orders(_const_C(n), mix, T, 0.0, dt, 3)[3] - exact))
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 3.5 < r1 < 4.5 and 3.5 < r2 < 4.5


def test_series_and_ode_agree_constant_kernel():
    mix = MixturePolynomial.pure(2, 1.0)
    beta, dt, T = 0.3, 0.01, 2.0
    n = int(T / dt)
    C = _const_C(n)
    H = nc.h_ode(C, mix, beta, dt)
    val, tail = nc.h_series(C, mix, beta, T, 0.0, dt, 8)
    assert abs(H.at(T, 0.0) - val) < max(tail, 1e-6)
    assert val == pytest.approx(float(nc.semicircle_mgf(beta * T)), abs=1e-5)


def test_h_ode_respects_semicircle_bound():
    mix = MixturePolynomial.pure(2, 1.0)
    beta, dt, T = 0.5, 0.01, 3.0
    n = int(T / dt)
    H = nc.h_ode(_const_C(n), mix, beta, dt)
    tau = np.arange(n + 1) * dt
    bound = nc.semicircle_bound(beta * tau)
    assert np.all(H.values[:, 0] <= bound * (1 + 1e-3))


def test_hkernel_access_and_csv(tmp_path):
    mix = MixturePolynomial.pure(2, 1.0)
    H = nc.h_ode(_const_C(4), mix, 0.5, 0.25)
    assert H.at(0.5, 0.5) == 1.0
    with pytest.raises(InvalidArgumentError):
        H.at(0.25, 0.5)
    with pytest.raises(InvalidArgumentError):
        H.at(0.3, 0.0)
    H.to_csv(tmp_path / "h.csv", "hdr")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "# hdr" and lines[1] == "s,t,H"
    assert len(lines) == 2 + 15


def test_series_argument_checks():
    mix = MixturePolynomial.pure(2, 1.0)
    with pytest.raises(InvalidArgumentError):
        nc.h_series_orders(_const_C(4), mix, 1.0, 0.0, 0.25, 0)
    with pytest.raises(InvalidArgumentError):
        nc.h_series_orders(_const_C(4), mix, 0.0, 1.0, 0.25, 2)
