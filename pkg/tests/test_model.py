import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

from cklab import model
from cklab.errors import InfeasibleModelError, InvalidArgumentError
from cklab.model import MixturePolynomial, SoftPotential

SQRT6 = math.sqrt(6.0)

mixtures = st.lists(
    st.tuples(st.integers(2, 6), st.floats(0.1, 3.0)),
    min_size=1, max_size=3, unique_by=lambda t: t[0],
).map(MixturePolynomial)


# ---------------------------------------------------------------- oracles

def test_nu_pure_3_spin(pure3):
    assert pure3.nu(0.5) == pytest.approx(0.125, abs=1e-15)
    assert pure3.nu(1.0, 1) == pytest.approx(3.0)
    assert pure3.nu(1.0, 2) == pytest.approx(6.0)
    assert pure3.nu(1.0, 3) == pytest.approx(6.0)


def test_psi_pure_3_spin(pure3):
    assert pure3.psi(0.5) == pytest.approx(2.25, abs=1e-14)


def test_nu_rejects_bad_order(pure2):
    with pytest.raises(InvalidArgumentError):
        pure2.nu(0.5, 4)


@pytest.mark.parametrize("terms", [[], [(1, 1.0)], [(2, 1.0), (2, 0.5)], [(2, float("nan"))],
                                   [(2.5, 1.0)]])
def test_mixture_validation(terms):
    with pytest.raises(InvalidArgumentError):
        MixturePolynomial(terms)


def test_mixture_accepts_dicts_and_sorts():
    mix = MixturePolynomial([{"p": 4, "a": 1.0}, {"p": 2, "a": 0.5}])
    assert mix.terms == ((2, 0.5), (4, 1.0))
    assert mix.m == 4
    assert MixturePolynomial(mix.to_json()) == mix


def test_f_soft_values():
    pot = SoftPotential(0.0, 1)
    assert model.f_soft(pot, 2.0) == pytest.approx(1.0)
    pot = SoftPotential(3.0, 2)
    assert model.f_soft(pot, 1.0) == pytest.approx(1 / 8)
    assert model.f_soft(pot, 1.0, 1) == pytest.approx(0.5)
    assert model.f_soft(pot, 1.0, 2) == pytest.approx(6.0 + 1.5)


def test_soft_potential_checks(pure3):
    with pytest.raises(InvalidArgumentError):
        SoftPotential(-1.0, 1)
    with pytest.raises(InvalidArgumentError):
        SoftPotential(1.0, 0)
    SoftPotential(1.0, 1).check_mixture(pure3)
    with pytest.raises(InvalidArgumentError):
        SoftPotential(1.0, 1).check_mixture(MixturePolynomial.pure(4))


def test_critical_constants_pure_2(pure2):
    bc, _ = model.beta_c(pure2)
    assert bc == pytest.approx(0.5, abs=1e-9)
    assert model.q_of_beta(pure2, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert model.gamma_of_beta(pure2, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert model.i_gamma(pure2, 1.0, 0.0) == pytest.approx(0.0, abs=1e-9)


def test_critical_constants_pure_3(pure3):
    bc, xs = model.beta_c(pure3)
    assert bc == pytest.approx(1 / math.sqrt(3), abs=1e-9)
    assert xs == pytest.approx(0.5, abs=1e-9)


def test_q_pure_2_closed_form(pure2):
    # 4 beta^2 (1-q)^2 = 1
    for beta in (0.6, 1.0, 2.0, 5.0):
        assert model.q_of_beta(pure2, beta) == pytest.approx(1 - 1 / (2 * beta), abs=1e-9)


def test_below_transition_convention(pure3):
    cp = model.critical_profile(pure3, 0.3)
    assert cp.q == 0 and cp.q_is_trivial
    assert cp.gamma == 0.5
    assert cp.i_gamma == pytest.approx(0.0, abs=1e-12)
    assert cp.d_infinity == pytest.approx(0.0, abs=1e-9)


def test_d_infinity_examples():
    assert model.d_infinity([0.5], 0.5) == pytest.approx(0.0, abs=1e-12)
    assert model.d_infinity([0.0, 2.0], 0.5) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(InfeasibleModelError):
        model.d_infinity([0.1], 0.5)


def test_exp_decay_criterion_equality_case():
    phi = Polynomial([0.0, 2.0])
    assert model.exp_decay_criterion(phi, 0.5, 0.5) == (False, False)
    assert model.exp_decay_criterion(Polynomial([0.5]), 0.5, 0.0) == (True, True)


def test_gamma_pure_3_consistency(pure3):
    beta = 0.7
    q = model.q_of_beta(pure3, beta)
    assert 4 * beta**2 * model.g_eval(pure3, q) == pytest.approx(1.0, abs=1e-9)
    g = model.gamma_of_beta(pure3, beta)
    assert g == pytest.approx(2 * beta**2 * (pure3.nu(q, 2) * (1 - q) - pure3.nu(q, 1)), abs=1e-12)


def test_mixture_from_config():
    mix, beta = model.mixture_from_config({"terms": [{"p": 2, "a": 1}], "beta": 0.3})
    assert mix.terms == ((2, 1.0),) and beta == 0.3


# ------------------------------------------------------------- properties

@given(mixtures, st.floats(0.0, 1.0))
def test_nu_prime_dominated(mix, x):
    # every monomial has degree >= 2, so nu'(x) <= x nu''(x)
    assert mix.nu(x, 1) <= x * mix.nu(x, 2) + 1e-12 * (1 + mix.nu(1.0, 2))


@given(mixtures, st.floats(0.0, 1.0))
def test_psi_identity(mix, x):
    assert mix.psi(x) == pytest.approx(mix.nu(x, 1) + x * mix.nu(x, 2), rel=1e-12, abs=1e-12)


@given(mixtures, st.floats(0.0, 1.0))
def test_g_h_definitions(mix, x):
    assert model.g_eval(mix, x) == pytest.approx(mix.nu(x, 2) * (1 - x) ** 2, rel=1e-10, abs=1e-14)
    if x > 1e-6:
        assert model.h_eval(mix, x) == pytest.approx(mix.nu(x, 1) * (1 - x) / x, rel=1e-8, abs=1e-12)


@given(mixtures, st.floats(1.05, 3.0), st.floats(1.05, 2.0))
def test_q_monotone_above_transition(mix, f1, f2):
    bc, _ = model.beta_c(mix)
    b1 = bc * f1
    b2 = b1 * f2
    assert model.q_of_beta(mix, b2) >= model.q_of_beta(mix, b1) - 1e-9


@given(mixtures, st.floats(1.01, 3.0))
def test_q_solves_plateau_equation(mix, f):
    bc, _ = model.beta_c(mix)
    beta = bc * f
    q = model.q_of_beta(mix, beta)
    assert 0 < q < 1
    assert 4 * beta**2 * model.g_eval(mix, q) == pytest.approx(1.0, abs=1e-7)
    xs = np.linspace(q + 1e-6, 1.0, 200)
    assert np.all(4 * beta**2 * model.g_eval(mix, xs) < 1.0 + 1e-9)


@given(mixtures, st.floats(1.01, 3.0))
def test_i_gamma_identity(mix, f):
    bc, _ = model.beta_c(mix)
    beta = bc * f
    cp = model.critical_profile(mix, beta)
    q = cp.q
    rhs = 4 * beta**2 * (1 - q) * (mix.nu(q, 2) - mix.nu(q, 1)) - 1
    assert 2 * cp.i_gamma == pytest.approx(rhs, abs=1e-7)
    alt = cp.gamma - 0.5 + 2 * beta**2 * q * mix.nu(q, 1)
    assert cp.i_gamma == pytest.approx(alt, abs=1e-7)
    assert cp.d_infinity == pytest.approx(q, abs=1e-6)


@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=4), st.floats(0.05, 0.5))
def test_d_infinity_postcondition(coef, b):
    # non-decreasing phi: cumulative positive increments
    c = np.concatenate([[coef[0]], np.abs(coef[1:])])
    phi = Polynomial(c)
    F = phi * Polynomial([1.0, -1.0]) - b
    xs = np.linspace(0, 1, 2001)
    if F(xs).max() < -1e-9:
        with pytest.raises(InfeasibleModelError):
            model.d_infinity(phi, b)
        return
    if F(xs).max() < 1e-6:
        return  # near-tangent, skip ill-conditioned case
    d = model.d_infinity(phi, b)
    assert F(d) >= -1e-8
    right = xs[xs > d + 1e-6]
    assert np.all(F(right) < 1e-8)


@given(mixtures)
def test_beta_c_is_sup(mix):
    bc, xs = model.beta_c(mix)
    x = np.linspace(1e-4, 1.0, 4001)
    assert 1.0 / (4 * bc * bc) == pytest.approx(max(model.h_eval(mix, x).max(), model.h_eval(mix, xs)), rel=1e-6)
