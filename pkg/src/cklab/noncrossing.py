"""Non-crossing pairings and the Kraichnan kernel H(s, t).

H solves dH(s,t)/ds = beta^2 int_t^s H(s,u) H(u,t) nu''(C(s,u)) du with
H(t,t) = 1. Expanding in beta^2 gives a sum over non-crossing pairings of
{1..2n}; :func:`h_series` evaluates that sum order by order and
:func:`h_ode` integrates the equation directly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ive

from . import kernels
from .errors import InvalidArgumentError, ResourceLimitError

MAX_ENUM_N = 8


@dataclass(frozen=True)
class NcPairing:
    n: int
    pairs: tuple  # ((i, sigma(i)), ...) with i < sigma(i), 1-based, sorted by i

    @property
    def sigma(self) -> tuple:
        s = [0] * (2 * self.n)
        for a, b in self.pairs:
            s[a - 1], s[b - 1] = b, a
        return tuple(s)

    @property
    def crossing_representatives(self) -> tuple:
        """cr(sigma) = {i : i < sigma(i)}."""
        return tuple(a for a, _ in self.pairs)

    def is_valid(self) -> bool:
        seen = sorted(x for p in self.pairs for x in p)
        if seen != list(range(1, 2 * self.n + 1)):
            return False
        for a, b in self.pairs:
            for c, d in self.pairs:
                if a < c < b < d:
                    return False
        return True


def _nc_rec(lo: int, hi: int):
    """All non-crossing pairings of the integer range [lo, hi)."""
    if lo >= hi:
        return [()]
    out = []
    for partner in range(lo + 1, hi, 2):
        for inner in _nc_rec(lo + 1, partner):
            for outer in _nc_rec(partner + 1, hi):
                out.append(((lo, partner),) + inner + outer)
    return out


def enumerate_nc(n: int) -> list:
    """Every non-crossing fixed-point-free involution of {1, ..., 2n}."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    if n > MAX_ENUM_N:
        raise ResourceLimitError(f"enumeration capped at n <= {MAX_ENUM_N}")
    res = [NcPairing(n, tuple(sorted(p))) for p in _nc_rec(1, 2 * n + 1)]
    res.sort(key=lambda p: p.sigma)
    return res


def catalan(n: int) -> int:
    if n < 0:
        raise InvalidArgumentError("n must be >= 0")
    return math.comb(2 * n, n) // (n + 1)


# ------------------------------------------------------------ bounds

def semicircle_mgf(theta):
    """E exp(theta X) for X semicircular on [-2, 2]: I_1(2 theta) / theta."""
    theta = np.asarray(theta, dtype=float)
    safe = np.where(theta == 0, 1.0, theta)
    val = ive(1, 2 * safe) * np.exp(2 * np.abs(safe)) / safe
    return np.where(theta == 0, 1.0, val)


@lru_cache(maxsize=1)
def semicircle_constant() -> float:
    """Smallest c1 with mgf(theta) <= c1 (1+theta)^(-3/2) e^(2 theta), theta >= 0."""
    th = np.concatenate([np.linspace(0, 10, 20001)[1:], np.geomspace(10, 1e6, 4000)])
    ratio = ive(1, 2 * th) / th * (1 + th) ** 1.5
    return float(max(1.0, ratio.max()))


def semicircle_bound(theta):
    theta = np.asarray(theta, dtype=float)
    return semicircle_constant() * (1 + theta) ** -1.5 * np.exp(2 * theta)


def series_tail(x: float, n_max: int) -> float:
    """sum_{n > n_max} x^(2n) / (2n)!"""
    if x == 0:
        return 0.0
    n = n_max + 1
    term = math.exp(2 * n * math.log(abs(x)) - math.lgamma(2 * n + 1))
    total = 0.0
    while True:
        total += term
        term *= x * x / ((2 * n + 1) * (2 * n + 2))
        n += 1
        if term < 1e-18 * total or term == 0.0:
            return total


# ------------------------------------------------------------ helpers

def _dense_C(C):
    if hasattr(C, "C_dense"):
        return C.C_dense()
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidArgumentError("C must be a square two-time array")
    return C


def _mesh_index(x: float, dt: float, name: str) -> int:
    k = int(round(x / dt))
    if abs(k * dt - x) > 1e-9 * max(1.0, abs(x)):
        raise InvalidArgumentError(f"{name}={x} is not a mesh point for dt={dt}")
    return k


def h_series_orders(C, mix, s: float, t: float, dt: float, n_max: int) -> np.ndarray:
    """Coefficients H_n(s, t), n = 0..n_max, of the expansion in beta^2.

    H_0 = 1 and dH_n(s,t)/ds = sum_k int_t^s H_{n-k}(u,t) nu''(C(s,u)) H_{k-1}(s,u) du:
    the first pair either closes at the last time or encloses a nested block,
    which is how every non-crossing pairing decomposes.
    """
    if n_max < 1:
        raise InvalidArgumentError("n_max must be >= 1")
    Cd = _dense_C(C)
    i, j = _mesh_index(s, dt, "s"), _mesh_index(t, dt, "t")
    if i < j:
        raise InvalidArgumentError("need s >= t")
    if i >= Cd.shape[0]:
        raise InvalidArgumentError("s lies beyond the sampled kernel")
    m = i - j
    W = np.tril(mix.nu(np.clip(Cd[j:i + 1, j:i + 1], 0.0, None), 2))
    low = np.tril(np.ones((m + 1, m + 1)))
    orders = [low]
    out = np.empty(n_max + 1)
    out[0] = 1.0
    for n in range(1, n_max + 1):
        D = np.zeros((m + 1, m + 1))
        for k in range(1, n + 1):
            A, B = orders[k - 1], orders[n - k]
            X = W * A
            full = X @ B
            D += full - 0.5 * X * np.diag(B)[None, :] - 0.5 * np.diag(X)[:, None] * B
        D = np.tril(D) * dt
        Hn = dt * (np.cumsum(D, axis=0) - 0.5 * D)
        Hn = np.tril(Hn)
        orders.append(Hn)
        out[n] = Hn[m, 0]
    return out


def h_series(C, mix, beta: float, s: float, t: float, dt: float, n_max: int,
             c_bound: float | None = None):
    """Truncated pairing series for H(s, t) and a bound on the neglected tail."""
    coef = h_series_orders(C, mix, s, t, dt, n_max)
    b2 = beta * beta
    value = float(np.polyval(coef[::-1], b2))
    if c_bound is None:
        Cd = _dense_C(C)
        i, j = _mesh_index(s, dt, "s"), _mesh_index(t, dt, "t")
        c_bound = float(max(Cd[j:i + 1, j:i + 1].max(), 0.0))
    x = 2.0 * beta * math.sqrt(mix.nu(c_bound, 2)) * (s - t)
    return value, series_tail(x, n_max)


@dataclass
class HKernel:
    dt: float
    values: np.ndarray  # dense, lower triangle meaningful
    truncation_order: int | None = None
    tail_bound: float = 0.0

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    def at(self, s: float, t: float) -> float:
        i, j = _mesh_index(s, self.dt, "s"), _mesh_index(t, self.dt, "t")
        if j > i:
            raise InvalidArgumentError("H is defined for s >= t")
        return float(self.values[i, j])

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "t", "H"])
            for i in range(self.n + 1):
                for j in range(i + 1):
                    w.writerow([repr(i * self.dt), repr(j * self.dt), repr(float(self.values[i, j]))])


def h_ode(C, mix, beta: float, dt: float) -> HKernel:
    """Heun march of the Kraichnan equation over the whole mesh of ``C``."""
    Cd = np.ascontiguousarray(_dense_C(C))
    n = Cd.shape[0] - 1
    nu2 = mix.coeffs(2)
    b2 = beta * beta
    H = np.zeros((n + 1, n + 1))
    H[0, 0] = 1.0
    F = np.zeros(n + 1)
    tmp = np.zeros(n + 1)
    for i in range(1, n + 1):
        H[i, :i] = H[i - 1, :i] + dt * F[:i]
        H[i, i] = 1.0
        kernels.kraichnan_row(i, H, Cd, nu2, dt, tmp)
        H[i, :i] = H[i - 1, :i] + 0.5 * dt * (F[:i] + b2 * tmp[:i])
        kernels.kraichnan_row(i, H, Cd, nu2, dt, tmp)
        F[:i + 1] = b2 * tmp[:i + 1]
    return HKernel(dt=dt, values=H)
