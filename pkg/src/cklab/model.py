"""Mixture covariance, confining potentials and critical constants.

The covariance of the disorder is nu(r) = sum_p a_p^2 / p! r^p with p >= 2.
Everything downstream (memory kernels, FDT nonlinearity, Langevin
couplings) is derived from a :class:`MixturePolynomial`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InfeasibleModelError, InvalidArgumentError

GRID_POINTS = 2**12
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class MixturePolynomial:
    """Sparse list of ``(p, a_p)`` pairs; immutable."""

    terms: tuple

    def __init__(self, terms: Iterable):
        parsed = []
        for t in terms:
            if isinstance(t, dict):
                p, a = t["p"], t["a"]
            else:
                p, a = t
            if int(p) != p or p < 2:
                raise InvalidArgumentError(f"term degree must be an integer >= 2, got {p!r}")
            a = float(a)
            if not math.isfinite(a):
                raise InvalidArgumentError("coefficients must be finite")
            parsed.append((int(p), a))
        if not parsed:
            raise InvalidArgumentError("mixture needs at least one term")
        ps = [p for p, _ in parsed]
        if len(set(ps)) != len(ps):
            raise InvalidArgumentError(f"duplicate degree in mixture terms: {sorted(ps)}")
        parsed.sort()
        if parsed[-1][1] == 0.0:
            raise InvalidArgumentError("the top-degree coefficient must be nonzero")
        object.__setattr__(self, "terms", tuple(parsed))

    @classmethod
    def pure(cls, p: int, a: float = 1.0) -> "MixturePolynomial":
        return cls([(p, a)])

    @property
    def m(self) -> int:
        return self.terms[-1][0]

    def to_json(self) -> list:
        return [{"p": p, "a": a} for p, a in self.terms]

    def nu_poly(self, order: int = 0) -> Polynomial:
        c = np.zeros(self.m + 1)
        for p, a in self.terms:
            c[p] = a * a / math.factorial(p)
        return Polynomial(c).deriv(order) if order else Polynomial(c)

    def coeffs(self, order: int = 0) -> np.ndarray:
        """Ascending coefficients of the order-th derivative (length >= 1)."""
        c = self.nu_poly(order).coef
        return np.ascontiguousarray(c if c.size else np.zeros(1), dtype=np.float64)

    def psi_poly(self) -> Polynomial:
        # psi = d/dr [r nu'(r)]
        return (Polynomial([0.0, 1.0]) * self.nu_poly(1)).deriv()

    def kernel_coeffs(self):
        """(nu', nu'', psi) coefficient arrays used by the two-time kernels."""
        return (
            self.coeffs(1),
            self.coeffs(2),
            np.ascontiguousarray(self.psi_poly().coef, dtype=np.float64),
        )

    def nu(self, r, order: int = 0):
        return nu_eval(self, r, order)

    def psi(self, r):
        return psi_eval(self, r)


def nu_eval(mix: MixturePolynomial, r, order: int = 0):
    """Order-th derivative of nu at ``r`` (scalar or array)."""
    if order not in (0, 1, 2, 3):
        raise InvalidArgumentError(f"order must be in {{0,1,2,3}}, got {order!r}")
    if np.any(np.asarray(r) < 0):
        raise InvalidArgumentError("nu is evaluated on r >= 0 only")
    return mix.nu_poly(order)(r)


def psi_eval(mix: MixturePolynomial, r):
    return mix.psi_poly()(r)


@dataclass(frozen=True)
class SoftPotential:
    """f_L(r) = L (r-1)^2 + r^(2k) / (4k)."""

    L: float
    k: int

    def __post_init__(self):
        if self.L < 0:
            raise InvalidArgumentError("L must be non-negative")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgumentError("k must be a positive integer")

    def check_mixture(self, mix: MixturePolynomial):
        if 4 * self.k <= mix.m:
            raise InvalidArgumentError(
                f"soft potential needs 4k > m; got k={self.k}, m={mix.m}")

    def f(self, r, order: int = 0):
        return f_soft(self, r, order)


def f_soft(pot: SoftPotential, r, order: int = 0):
    L, k = pot.L, pot.k
    r = np.asarray(r, dtype=float) if np.ndim(r) else float(r)
    if order == 0:
        return L * (r - 1.0) ** 2 + r ** (2 * k) / (4 * k)
    if order == 1:
        return 2 * L * (r - 1.0) + 0.5 * r ** (2 * k - 1)
    if order == 2:
        return 2 * L + 0.5 * (2 * k - 1) * r ** (2 * k - 2)
    raise InvalidArgumentError(f"order must be in {{0,1,2}}, got {order!r}")


# ---------------------------------------------------------------- critical

def _h_poly(mix: MixturePolynomial) -> Polynomial:
    # h(x) = nu'(x)(1-x)/x; nu'(0) = 0 so the division is exact
    d1 = mix.nu_poly(1).coef
    return Polynomial(d1[1:] if d1.size > 1 else [0.0]) * Polynomial([1.0, -1.0])


def _g_poly(mix: MixturePolynomial) -> Polynomial:
    return mix.nu_poly(2) * Polynomial([1.0, -1.0]) ** 2


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm >= 0) == (flo >= 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def beta_c(mix: MixturePolynomial, tol: float = DEFAULT_TOL):
    """Return ``(beta_c, x_star)``.

    ``x_star`` is the largest maximiser of h on [0, 1]. Candidates are the
    grid-local maxima of h, each refined by bisection on h'.
    """
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    h = _h_poly(mix)
    dh = h.deriv()
    x = np.linspace(0.0, 1.0, GRID_POINTS + 1)
    hv = h(x)
    cands = []
    for i in range(len(x)):
        left = hv[i - 1] if i > 0 else -np.inf
        right = hv[i + 1] if i < len(x) - 1 else -np.inf
        if hv[i] >= left and hv[i] >= right:
            cands.append(i)
    best_x, best_h = None, -np.inf
    for i in reversed(cands):
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, len(x) - 1)]
        if dh(lo) > 0 and dh(hi) < 0:
            xs = _bisect(dh, lo, hi, min(tol, 1e-14))
        else:
            xs = x[i]
        val = h(xs)
        if val > best_h + 1e-14 * max(1.0, abs(val)):
            best_x, best_h = xs, val
    return 1.0 / (2.0 * math.sqrt(best_h)), float(best_x)


def q_of_beta(mix: MixturePolynomial, beta: float, tol: float = DEFAULT_TOL):
    """sup{x in [0,1] : 4 beta^2 g(x) >= 1}, or 0 when the set is empty."""
    return _q_and_flag(mix, beta, tol)[0]


def _q_and_flag(mix, beta, tol=DEFAULT_TOL):
    if beta < 0 or tol <= 0:
        raise InvalidArgumentError("need beta >= 0 and tol > 0")
    bc, xs = beta_c(mix, tol)
    if beta < bc:
        return 0.0, True
    g = _g_poly(mix)

    def F(x):
        return 4.0 * beta * beta * g(x) - 1.0

    x = np.linspace(0.0, 1.0, GRID_POINTS + 1)
    fv = F(x)
    ok = np.nonzero(fv >= 0)[0]
    if ok.size == 0:
        # tangency at beta_c on a point between grid nodes
        return xs, False
    k = ok[-1]
    if k == len(x) - 1:
        return 1.0, False
    return _bisect(F, x[k], x[k + 1], tol), False


def gamma_of_beta(mix: MixturePolynomial, beta: float, tol: float = DEFAULT_TOL):
    q, trivial = _q_and_flag(mix, beta, tol)
    if trivial:
        return 0.5
    return 2.0 * beta * beta * (mix.nu(q, 2) * (1.0 - q) - mix.nu(q, 1))


def phi_poly(mix: MixturePolynomial, beta: float, gamma: float) -> Polynomial:
    """phi(x) = gamma + 2 beta^2 nu'(x)."""
    return Polynomial([gamma]) + 2.0 * beta * beta * mix.nu_poly(1)


def _as_poly(phi) -> Polynomial:
    if isinstance(phi, Polynomial):
        return phi
    if callable(phi):
        raise InvalidArgumentError("phi must be a numpy Polynomial or a coefficient sequence")
    return Polynomial(np.asarray(phi, dtype=float))


def _trim(poly: Polynomial) -> Polynomial:
    # drop negligible leading coefficients so the companion matrix stays finite
    c = poly.coef
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return Polynomial([0.0])
    keep = np.nonzero(np.abs(c) > 1e-14 * scale)[0]
    return Polynomial(c[: keep[-1] + 1])


def d_infinity(phi, b: float, tol: float = DEFAULT_TOL) -> float:
    """sup{x in [0,1] : phi(x)(1-x) >= b}.

    A grid scan brackets the last sign change; tangential contact (the
    generic situation at the plateau above the transition) is caught by
    checking the critical points of phi(x)(1-x).
    """
    if b <= 0:
        raise InvalidArgumentError("b must be positive")
    phi = _as_poly(phi)
    F = phi * Polynomial([1.0, -1.0]) - b
    x = np.linspace(0.0, 1.0, GRID_POINTS + 1)
    fv = F(x)
    cand = -1.0
    ok = np.nonzero(fv >= 0)[0]
    if ok.size:
        k = ok[-1]
        cand = 1.0 if k == len(x) - 1 else _bisect(F, x[k], x[k + 1], tol)
    dF = _trim(F.deriv())
    if dF.degree() >= 1:
        for r in dF.roots():
            if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1.0 + 1e-12:
                xr = min(max(float(r.real), 0.0), 1.0)
                if F(xr) < -10.0 * tol:
                    continue
                # near a tangency the bracketed root is only sqrt(eps)-accurate,
                # the critical point is well conditioned
                if xr > cand or abs(xr - cand) < 1e-6:
                    cand = xr
    if cand < 0:
        raise InfeasibleModelError(
            f"sup phi(x)(1-x) = {fv.max() + b:.6g} is below b = {b:.6g}")
    return float(cand)


def i_gamma(mix: MixturePolynomial, beta: float, gamma: float, b: float = 0.5,
            tol: float = DEFAULT_TOL) -> float:
    """I_gamma = gamma - b + D_inf (phi(D_inf) - gamma)."""
    phi = phi_poly(mix, beta, gamma)
    dinf = d_infinity(phi, b, tol)
    return gamma - b + dinf * (phi(dinf) - gamma)


def exp_decay_criterion(phi, b: float, d_inf: float, tol: float = 0.0):
    """Strict-inequality pair (phi(1) > 2 sqrt(b phi'(1)), phi(D) > phi'(D)(1-D))."""
    phi = _as_poly(phi)
    dphi = phi.deriv()
    c1 = phi(1.0) > 2.0 * math.sqrt(max(b * dphi(1.0), 0.0)) + tol
    c2 = phi(d_inf) > dphi(d_inf) * (1.0 - d_inf) + tol
    return bool(c1), bool(c2)


@dataclass(frozen=True)
class CriticalProfile:
    beta: float
    beta_c: float
    x_star: float
    q: float
    gamma: float
    d_infinity: float
    i_gamma: float
    q_is_trivial: bool
    criteria: tuple = field(default=(True, True))


def critical_profile(mix: MixturePolynomial, beta: float, b: float = 0.5,
                     tol: float = DEFAULT_TOL) -> CriticalProfile:
    bc, xs = beta_c(mix, tol)
    q, trivial = _q_and_flag(mix, beta, tol)
    gam = gamma_of_beta(mix, beta, tol)
    phi = phi_poly(mix, beta, gam)
    dinf = d_infinity(phi, b, tol)
    ig = gam - b + dinf * (phi(dinf) - gam)
    crit = exp_decay_criterion(phi, b, dinf, 1e-12)
    return CriticalProfile(beta, bc, xs, q, gam, dinf, ig, trivial, crit)


def g_eval(mix: MixturePolynomial, x):
    return _g_poly(mix)(x)


def h_eval(mix: MixturePolynomial, x):
    return _h_poly(mix)(x)


def mixture_from_config(obj) -> tuple:
    """Parse ``{"terms": [...], "beta": b}`` into ``(mixture, beta)``."""
    mix = MixturePolynomial(obj["terms"])
    return mix, float(obj.get("beta", 0.0))
