"""One-time FDT equation D'(s) = -int_0^s phi(D(v)) D'(s-v) dv - b, D(0) = 1.

Two independent solvers are provided. :func:`solve_direct` marches the
equation with an implicit-in-the-newest-point trapezoid rule.
:func:`solve_fixed_point` iterates the map E -> Phi(E) on E = D - D_inf, in
which each iterate requires the auxiliary kernel H_s(E) obtained from a
quadratic convolution equation.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from . import kernels
from .errors import (DivergenceError, HorizonTooShortError, InvalidArgumentError,
                     InvalidWindowError, NonConvergenceError)
from .model import (MixturePolynomial, _as_poly, d_infinity,
                    gamma_of_beta, i_gamma as _i_gamma, phi_poly)

MAX_STEPS = 2_000_000


@dataclass
class FdtProblem:
    """Data of one FDT equation; ``d_infinity`` is filled in on construction."""

    b: float
    phi: Polynomial
    dt: float
    T: float | None = None
    d_infinity: float = field(default=float("nan"))

    def __post_init__(self):
        if not self.b > 0:
            raise InvalidArgumentError("b must be positive")
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        self.phi = _as_poly(self.phi)
        dphi = self.phi.deriv()
        xs = np.linspace(0, 1, 257)
        if np.any(dphi(xs) < -1e-12):
            raise InvalidArgumentError("phi must be non-decreasing on [0, 1]")
        self.d_infinity = d_infinity(self.phi, self.b)
        if self.T is None:
            eps = max(0.05, self.b - float(dphi(0.0)))
            self.T = max(20.0, 10.0 / eps)
        if self.steps > MAX_STEPS:
            raise InvalidArgumentError(f"T/dt exceeds {MAX_STEPS} steps")

    @classmethod
    def from_mixture(cls, mix: MixturePolynomial, beta: float, dt: float,
                     T: float | None = None, gamma: float | None = None,
                     b: float = 0.5) -> "FdtProblem":
        if gamma is None:
            gamma = gamma_of_beta(mix, beta)
        return cls(b=b, phi=phi_poly(mix, beta, gamma), dt=dt, T=T)

    @property
    def steps(self) -> int:
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise InvalidArgumentError("T must be an integer multiple of dt")
        return n

    @property
    def mu(self) -> float:
        return float(self.phi(1.0))


@dataclass
class FdtSolution:
    tau: np.ndarray
    D: np.ndarray
    Dprime: np.ndarray
    mu: float
    method: str
    iterations: int
    residual: float
    b: float
    d_infinity: float

    def pair(self):
        return fdt_pair(self, self.b)

    def to_csv(self, path, header_comment: str | None = None):
        C, R = self.pair()
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "D", "Dprime", "C_fdt", "R_fdt"])
            for row in zip(self.tau, self.D, self.Dprime, C, R):
                w.writerow([repr(float(v)) for v in row])


def _check_envelope(D, dt, dinf):
    tol = 10.0 * dt * dt
    bad = np.nonzero((D < -tol) | (D > 1.0 + tol) | ~np.isfinite(D))[0]
    if bad.size:
        i = bad[0]
        raise DivergenceError(
            f"D left [0, 1] at tau={i * dt:.4g} (D={D[i]:.6g}); try a smaller step")


def solve_direct(problem: FdtProblem) -> FdtSolution:
    n = problem.steps
    D, y, upd = kernels.fdt_march(np.ascontiguousarray(problem.phi.coef, dtype=float),
                                  float(problem.b), float(problem.dt), n)
    _check_envelope(D, problem.dt, problem.d_infinity)
    tau = np.arange(n + 1) * problem.dt
    return FdtSolution(tau, D, y, problem.mu, "direct", 0, float(upd),
                       problem.b, problem.d_infinity)


def solve_direct_midpoint(problem: FdtProblem) -> FdtSolution:
    """Variant quadrature: D integrated by the midpoint-extrapolated rule.

    The convolution keeps the trapezoid weights but D_i comes from
    D_{i-1} + dt y(s_{i-1/2}) with y at the half step taken from quadratic
    extrapolation. Used only to probe uniqueness under refinement.
    """
    b, dt, n = problem.b, problem.dt, problem.steps
    phi = problem.phi
    D = np.empty(n + 1)
    y = np.empty(n + 1)
    ph = np.empty(n + 1)
    D[0], y[0] = 1.0, -b
    ph[0] = phi(1.0)
    for i in range(1, n + 1):
        s = float(np.dot(ph[1:i], y[i - 1:0:-1])) if i > 1 else 0.0
        Dp = D[i - 1] + dt * y[i - 1]
        for _ in range(3):
            yi = (-b - dt * (s + 0.5 * phi(Dp) * y[0])) / (1.0 + 0.5 * dt * ph[0])
            if i >= 2:
                ymid = (6 * y[i - 1] + 3 * yi - y[i - 2]) / 8.0
            else:
                ymid = 0.5 * (y[i - 1] + yi)
            Dp = D[i - 1] + dt * ymid
        y[i], D[i], ph[i] = yi, Dp, phi(Dp)
    _check_envelope(D, dt, problem.d_infinity)
    return FdtSolution(np.arange(n + 1) * dt, D, y, problem.mu, "direct-midpoint", 0,
                       0.0, b, problem.d_infinity)


def _cumtrapz(f, dt):
    out = np.empty_like(f)
    out[0] = 0.0
    np.cumsum(0.5 * dt * (f[1:] + f[:-1]), out=out[1:])
    return out


def solve_fixed_point(problem: FdtProblem, tol: float = 1e-10, max_iter: int = 500,
                      damping: float = 0.5, damped_iters: int = 5,
                      trace: list | None = None) -> FdtSolution:
    """Iterate E -> Phi(E) from E_0 = 1 - D_inf until the sup-norm change is < tol.

    Phi(E)(s) = (1 - D_inf - b int_0^s exp(-mu v) H_v(E) dv) v 0 with
    mu = phi(1), and H(E) solving
    H'(s) = b int_0^s phi'(E(s-v) + D_inf) H(s-v) H(v) dv, H(0) = 1.
    If ``trace`` is a list, every iterate is appended to it.
    """
    n, dt, b = problem.steps, problem.dt, problem.b
    dinf, mu = problem.d_infinity, problem.mu
    dphi = problem.phi.deriv()
    tau = np.arange(n + 1) * dt
    decay = np.exp(-mu * tau)
    E = np.full(n + 1, 1.0 - dinf)
    change = np.inf
    clipped = False
    for it in range(1, max_iter + 1):
        k = b * dphi(E + dinf)
        H = kernels.hform_solve(np.ascontiguousarray(k, dtype=float), dt)
        raw = 1.0 - dinf - b * _cumtrapz(decay * H, dt)
        clipped = bool(np.any(raw < 0))
        new = np.maximum(raw, 0.0)
        if it <= damped_iters:
            new = damping * new + (1.0 - damping) * E
        change = float(np.max(np.abs(new - E)))
        E = new
        if trace is not None:
            trace.append(E + dinf)
        if change < tol:
            break
    else:
        raise NonConvergenceError(
            f"fixed-point iteration did not reach tol={tol:g} in {max_iter} iterations "
            f"(last change {change:.3g})", residual=change, iterations=max_iter)
    if clipped:
        raise DivergenceError("the truncation at zero is active at the fixed point")
    D = E + dinf
    Dp = -b * decay * H
    _check_envelope(D, dt, dinf)
    return FdtSolution(tau, D, Dp, mu, "fixed-point", it, change, b, dinf)


def fdt_pair(sol: FdtSolution, b: float | None = None):
    """(C_fdt, R_fdt) = (D, -D'/b)."""
    b = sol.b if b is None else b
    return sol.D.copy(), -sol.Dprime / b


@dataclass
class ResidualReport:
    r_eq: float
    c_eq: float
    mu_eq: float
    mu_recovered: float
    mu: float
    i_gamma: float
    tau_max: float

    def as_dict(self):
        return dict(self.__dict__)

    @property
    def worst(self) -> float:
        return max(self.r_eq, self.c_eq, self.mu_eq)


def _deriv4(f, dt):
    """Fourth-order finite differences; one-sided five-point stencils at the ends."""
    n = f.size
    if n < 5:
        return np.gradient(f, dt, edge_order=2 if n > 2 else 1)
    d = np.empty(n)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)
    fw = np.array([-25, 48, -36, 16, -3]) / (12 * dt)
    d[0] = fw @ f[:5]
    d[1] = np.array([-3, -10, 18, -6, 1]) @ f[:5] / (12 * dt)
    d[-1] = -(fw @ f[-1:-6:-1])
    d[-2] = -(np.array([-3, -10, 18, -6, 1]) @ f[-1:-6:-1]) / (12 * dt)
    return d


def stationary_residuals(C, R, mix: MixturePolynomial, beta: float, gamma: float,
                         b: float = 0.5, dt: float | None = None,
                         tail_tol: float = 1e-8) -> ResidualReport:
    """Sup-norm residuals of the stationary (R, C, mu) system on [0, T/2].

    ``C`` and ``R`` are profiles in tau on a uniform mesh of step ``dt``
    (may be omitted when ``C`` is an :class:`FdtSolution`). Integrals over
    [0, inf) are truncated at the horizon, which requires R to have decayed
    below ``tail_tol`` on the second half of the mesh.
    """
    if isinstance(C, FdtSolution):
        sol = C
        dt = sol.tau[1] - sol.tau[0]
        C, R = fdt_pair(sol, b)
    if dt is None:
        raise InvalidArgumentError("dt is required for raw profiles")
    C = np.asarray(C, dtype=float)
    R = np.asarray(R, dtype=float)
    n = C.shape[0] - 1
    h = n // 2
    tail = float(np.max(np.abs(R[h:])))
    if tail >= tail_tol:
        raise HorizonTooShortError(
            f"R still {tail:.3g} beyond half the horizon; extend T")
    phi = phi_poly(mix, beta, gamma)
    dphi = phi.deriv()
    mu = float(phi(1.0))
    ig = _i_gamma(mix, beta, gamma, b)

    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    a = R * dphi(C)

    conv1 = np.convolve(R, a)[: n + 1]
    conv1 = dt * (conv1 - 0.5 * R * a[0] - 0.5 * R[0] * a)

    Cext = np.concatenate([C[:0:-1], C])
    conv2 = dt * np.convolve(Cext, a * w)[n: 2 * n + 1]

    g = phi(C) - gamma
    corr = np.correlate(g, R, mode="full")[n: 2 * n + 1]
    idx = np.arange(n + 1)
    conv3 = dt * (corr - 0.5 * g * R[0] - 0.5 * g[-1] * R[n - idx])

    dR = _deriv4(R, dt)
    dC = _deriv4(C, dt)
    res_r = dR + mu * R - b * conv1
    res_c = dC + mu * C - b * conv2 - b * conv3 - ig
    psi_hat = C * dphi(C) + phi(C) - gamma
    mu_rec = b + b * dt * float(np.sum(w * psi_hat * R)) + ig
    return ResidualReport(
        r_eq=float(np.max(np.abs(res_r[: h + 1]))),
        c_eq=float(np.max(np.abs(res_c[: h + 1]))),
        mu_eq=abs(mu_rec - mu),
        mu_recovered=mu_rec,
        mu=mu,
        i_gamma=ig,
        tau_max=h * dt,
    )


def decay_rate_fit(tau, profile, window):
    """Least-squares slope of -log(profile) over ``window``; returns (rate, r2)."""
    tau = np.asarray(tau, dtype=float)
    profile = np.asarray(profile, dtype=float)
    s0, s1 = window
    sel = (tau >= s0 - 1e-12) & (tau <= s1 + 1e-12)
    if sel.sum() < 3:
        raise InvalidWindowError(f"window {window} holds fewer than three samples")
    y = profile[sel]
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise InvalidWindowError("profile must be positive on the fit window")
    x = tau[sel]
    ly = np.log(y)
    slope, icept = np.polyfit(x, ly, 1)
    fit = slope * x + icept
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


def equality_case_profile(tau):
    """Exact D for phi(x) = 2x, b = 1/2: (1 + e^{-2t}(I0(2t) + I1(2t))) / 2."""
    from scipy.special import ive

    tau = np.asarray(tau, dtype=float)
    return 0.5 * (1.0 + ive(0, 2 * tau) + ive(1, 2 * tau))


def sidecar(sol: FdtSolution, extra: dict | None = None) -> str:
    data = {
        "b": sol.b,
        "mu": sol.mu,
        "d_infinity": sol.d_infinity,
        "method": sol.method,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "dt": float(sol.tau[1] - sol.tau[0]) if sol.tau.size > 1 else 0.0,
        "T": float(sol.tau[-1]),
    }
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, sort_keys=True)

