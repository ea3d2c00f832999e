"""Two-time integro-differential systems for R(s,t) and C(s,t).

Spherical mode (hard constraint, C(t,t) = 1):

    dR/ds = -mu(s) R + beta^2 int_t^s R(u,t) R(s,u) nu''(C(s,u)) du
    dC/ds = -mu(s) C + beta^2 int_0^s C(u,t) R(s,u) nu''(C(s,u)) du
                     + beta^2 int_0^t nu'(C(s,u)) R(t,u) du
    mu(s) = 1/2 + beta^2 int_0^s psi(C(s,u)) R(s,u) du

Soft mode replaces mu by f_L'(K(s)) and evolves K(s) = C(s,s) through
dK/ds = -2 f_L'(K) K + 1 + 2 beta^2 int_0^s psi(C(s,u)) R(s,u) du.

Rows are advanced in s with one Heun predictor-corrector step and
trapezoid memory integrals. Working arrays are dense (n+1)^2; the result
is packed into flat lower-triangular buffers.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (InstabilityError, InvalidArgumentError, ResourceLimitError)
from .model import MixturePolynomial, SoftPotential, f_soft

DEFAULT_MAX_N = 4000
HARD_MAX_N = 20000
MAGIC = b"TTGRID1\x00"
SPHERICAL, SOFT = 0, 1


def _steps(dt: float, T: float, max_n: int) -> int:
    if not (dt > 0 and T > 0):
        raise InvalidArgumentError("dt and T must be positive")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise InvalidArgumentError("T must be an integer multiple of dt")
    if n > min(max_n, HARD_MAX_N):
        raise ResourceLimitError(f"T/dt = {n} exceeds the mesh cap {min(max_n, HARD_MAX_N)}")
    return n


def _tri_index(n: int):
    return np.tril_indices(n + 1)


@dataclass
class TwoTimeGrid:
    """Solved fields on the mesh s_i = i dt, i = 0..n.

    ``R`` and ``C`` are flat lower triangles in row-major order (row ``i``
    holds columns ``0..i``); ``C`` is read back symmetrically.
    """

    dt: float
    n: int
    mode: int
    mix: MixturePolynomial
    beta: float
    R: np.ndarray
    C: np.ndarray
    K: np.ndarray
    mu: np.ndarray
    soft: tuple = (0.0, 0, 1.0)  # (L, k, K0)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def T(self) -> float:
        return self.n * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt

    @staticmethod
    def offset(i: int) -> int:
        return i * (i + 1) // 2

    def R_at(self, i: int, j: int) -> float:
        if j > i:
            raise InvalidArgumentError("R is stored for s >= t only")
        return float(self.R[self.offset(i) + j])

    def C_at(self, i: int, j: int) -> float:
        if j > i:
            i, j = j, i
        return float(self.C[self.offset(i) + j])

    def R_dense(self) -> np.ndarray:
        if "R" not in self._cache:
            A = np.zeros((self.n + 1, self.n + 1))
            A[_tri_index(self.n)] = self.R
            self._cache["R"] = A
        return self._cache["R"]

    def C_dense(self) -> np.ndarray:
        if "C" not in self._cache:
            A = np.zeros((self.n + 1, self.n + 1))
            A[_tri_index(self.n)] = self.C
            A = A + np.tril(A, -1).T
            self._cache["C"] = A
        return self._cache["C"]

    # -------------------------------------------------------- serialisation
    def save(self, path):
        L, k, K0 = self.soft
        head = struct.pack("<8sddIBxxxdI", MAGIC, self.dt, self.T, self.n, self.mode,
                           self.beta, len(self.mix.terms))
        terms = b"".join(struct.pack("<Id", p, a) for p, a in self.mix.terms)
        soft = struct.pack("<dId", float(L), int(k), float(K0))
        with open(path, "wb") as fh:
            fh.write(head + terms + soft)
            for arr in (self.R, self.C, self.K, self.mu):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "TwoTimeGrid":
        with open(path, "rb") as fh:
            raw = fh.read()
        hs = struct.calcsize("<8sddIBxxxdI")
        if len(raw) < hs:
            raise InvalidArgumentError("not a two-time checkpoint")
        magic, dt, _T, n, mode, beta, nterms = struct.unpack_from("<8sddIBxxxdI", raw, 0)
        if magic != MAGIC:
            raise InvalidArgumentError("not a two-time checkpoint")
        pos = hs
        terms = []
        for _ in range(nterms):
            p, a = struct.unpack_from("<Id", raw, pos)
            terms.append((p, a))
            pos += struct.calcsize("<Id")
        L, k, K0 = struct.unpack_from("<dId", raw, pos)
        pos += struct.calcsize("<dId")
        m = (n + 1) * (n + 2) // 2
        if pos + 8 * (2 * m + 2 * (n + 1)) != len(raw):
            raise InvalidArgumentError("checkpoint length does not match its header")
        arrs = []
        for size in (m, m, n + 1, n + 1):
            arrs.append(np.frombuffer(raw, dtype="<f8", count=size, offset=pos).astype(np.float64))
            pos += 8 * size
        return cls(dt, n, mode, MixturePolynomial(terms), beta, *arrs, soft=(L, k, K0))

    # ---------------------------------------------------------- CSV slices
    def write_diagonal_csv(self, path, header_comment=None):
        rows = [(i * self.dt, self.K[i], self.mu[i]) for i in range(self.n + 1)]
        _write_csv(path, ["s", "K", "mu"], rows, header_comment)

    def write_section_csv(self, path, t: float, tau_max: float, header_comment=None):
        C, R = fdt_section(self, t, tau_max)
        rows = [(k * self.dt, C[k], R[k]) for k in range(C.size)]
        _write_csv(path, ["tau", "C", "R"], rows, header_comment)

    def write_lag_csv(self, path, tau: float, header_comment=None):
        """Fixed-lag slice t -> (C(t+tau,t), R(t+tau,t))."""
        k = _index(tau, self.dt, self.n, "tau")
        rows = [(j * self.dt, self.C_at(j + k, j), self.R_at(j + k, j))
                for j in range(self.n - k + 1)]
        _write_csv(path, ["t", "C", "R"], rows, header_comment)


def _write_csv(path, header, rows, comment):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def _index(x: float, dt: float, n: int, name: str) -> int:
    k = int(round(x / dt))
    if abs(k * dt - x) > 1e-9 * max(1.0, abs(x)) or k < 0 or k > n:
        raise InvalidArgumentError(f"{name}={x} is not a mesh point in [0, {n * dt}]")
    return k


def _pack(R, C, n):
    idx = _tri_index(n)
    return np.ascontiguousarray(R[idx]), np.ascontiguousarray(C[idx])


def _check_row(i, R, C, dt, spherical, K=None):
    tol = 10.0 * dt
    r = R[i, : i + 1]
    c = C[i, : i + 1]
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(c))):
        raise InstabilityError(f"non-finite values at s={i * dt:.4g}; reduce dt")
    if r.min() < -tol or c.min() < -tol:
        raise InstabilityError(
            f"negative R or C (min {min(r.min(), c.min()):.3g}) at s={i * dt:.4g}; reduce dt")
    if spherical and c.max() > 1.0 + tol:
        raise InstabilityError(f"C exceeded 1 ({c.max():.6g}) at s={i * dt:.4g}; reduce dt")
    if K is not None and not K > 0:
        raise InstabilityError(f"K became non-positive at s={i * dt:.4g}; reduce dt")


# ---------------------------------------------------------------- solvers

def _march(mix, beta, dt, n, soft=None):
    nu1, nu2, psi = mix.kernel_coeffs()
    b2 = beta * beta
    N = n + 1
    R = np.zeros((N, N))
    C = np.zeros((N, N))
    K = np.ones(N)
    mu = np.empty(N)
    tr = np.zeros(N)
    t1 = np.zeros(N)
    t2 = np.zeros(N)
    if soft is not None:
        pot, K0, substeps = soft
        K[0] = K0
    R[0, 0] = 1.0
    C[0, 0] = K[0]
    M = kernels.row_integrals(0, R, R, C, nu1, nu2, psi, dt, tr, t1, t2)
    mu[0] = 0.5 + b2 * M if soft is None else f_soft(pot, K[0], 1)
    FR = np.zeros(N)
    FC = np.zeros(N)
    FR[0] = -mu[0] * R[0, 0]
    FC[0] = -mu[0] * C[0, 0]
    M_prev = M
    for i in range(1, N):
        R[i, :i] = R[i - 1, :i] + dt * FR[:i]
        C[i, :i] = C[i - 1, :i] + dt * FC[:i]
        R[i, i] = 1.0
        if soft is None:
            C[i, i] = 1.0
        else:
            Kp = _advance_K(pot, K[i - 1], M_prev, M_prev, b2, dt, substeps)
            C[i, i] = Kp
        C[:i, i] = C[i, :i]
        Mp = kernels.row_integrals(i, R, R, C, nu1, nu2, psi, dt, tr, t1, t2)
        mup = 0.5 + b2 * Mp if soft is None else f_soft(pot, C[i, i], 1)
        R[i, :i] = R[i - 1, :i] + 0.5 * dt * (FR[:i] - mup * R[i, :i] + b2 * tr[:i])
        C[i, :i] = C[i - 1, :i] + 0.5 * dt * (FC[:i] - mup * C[i, :i] + b2 * (t1[:i] + t2[:i]))
        if soft is not None:
            K[i] = _advance_K(pot, K[i - 1], M_prev, Mp, b2, dt, substeps)
            C[i, i] = K[i]
        C[:i, i] = C[i, :i]
        _check_row(i, R, C, dt, soft is None, K[i] if soft is not None else None)
        M = kernels.row_integrals(i, R, R, C, nu1, nu2, psi, dt, tr, t1, t2)
        mu[i] = 0.5 + b2 * M if soft is None else f_soft(pot, K[i], 1)
        FR[: i + 1] = -mu[i] * R[i, : i + 1] + b2 * tr[: i + 1]
        FC[: i + 1] = -mu[i] * C[i, : i + 1] + b2 * (t1[: i + 1] + t2[: i + 1])
        M_prev = M
    return R, C, K, mu


def _advance_K(pot, K, M0, M1, b2, dt, substeps):
    """RK2 sub-stepping of the scalar K equation, M linear across the step."""
    h = dt / substeps
    L, k = pot.L, pot.k

    def rhs(Kv, Mv):
        fp = 2 * L * (Kv - 1.0) + 0.5 * Kv ** (2 * k - 1)
        return -2.0 * fp * Kv + 1.0 + 2.0 * b2 * Mv

    for m in range(substeps):
        a0 = m / substeps
        a1 = (m + 1) / substeps
        Ma = M0 + a0 * (M1 - M0)
        Mb = M0 + a1 * (M1 - M0)
        k1 = rhs(K, Ma)
        k2 = rhs(K + h * k1, Mb)
        K = K + 0.5 * h * (k1 + k2)
    return K


def solve_spherical(mix: MixturePolynomial, beta: float, dt: float, T: float,
                    max_n: int = DEFAULT_MAX_N) -> TwoTimeGrid:
    n = _steps(dt, T, max_n)
    if beta < 0:
        raise InvalidArgumentError("beta must be >= 0")
    R, C, K, mu = _march(mix, beta, dt, n)
    Rt, Ct = _pack(R, C, n)
    g = TwoTimeGrid(dt, n, SPHERICAL, mix, float(beta), Rt, Ct, K, mu)
    g._cache["R"], g._cache["C"] = R, C
    return g


STIFF_GUARD = 0.1


def solve_soft(mix: MixturePolynomial, beta: float, pot: SoftPotential, dt: float, T: float,
               K0: float = 1.0, substeps: int | None = None,
               max_n: int = DEFAULT_MAX_N) -> TwoTimeGrid:
    """Soft-constraint system.

    The scalar K equation relaxes at a rate of order 4L. It is integrated
    with ``substeps`` RK2 sub-steps per mesh step so that the sub-step
    satisfies h L <= 0.1; the two-time memory terms keep the mesh step.
    """
    pot.check_mixture(mix)
    if not K0 > 0:
        raise InvalidArgumentError("K0 must be positive")
    n = _steps(dt, T, max_n)
    need = max(1, math.ceil(dt * pot.L / STIFF_GUARD - 1e-12))
    if substeps is None:
        substeps = need
    elif substeps < need:
        raise InvalidArgumentError(
            f"stiffness guard: dt*L/substeps = {dt * pot.L / substeps:.3g} > {STIFF_GUARD}")
    R, C, K, mu = _march(mix, beta, dt, n, soft=(pot, float(K0), int(substeps)))
    Rt, Ct = _pack(R, C, n)
    g = TwoTimeGrid(dt, n, SOFT, mix, float(beta), Rt, Ct, K, mu,
                    soft=(float(pot.L), int(pot.k), float(K0)))
    g._cache["R"], g._cache["C"] = R, C
    return g


def apply_psi(grid: TwoTimeGrid, mix: MixturePolynomial | None = None,
              beta: float | None = None) -> TwoTimeGrid:
    """One application of the map (R, C) -> (R~, C~).

    mu is computed from the input pair. R~ solves the R equation with the
    input C and that mu (R~ enters its own memory term); C~ solves a linear
    equation whose forcing is built from the input pair only.
    """
    if grid.mode != SPHERICAL:
        raise InvalidArgumentError("the map is defined for spherical grids")
    mix = grid.mix if mix is None else mix
    beta = grid.beta if beta is None else beta
    nu1, nu2, psi = mix.kernel_coeffs()
    b2 = beta * beta
    dt, n = grid.dt, grid.n
    N = n + 1
    Rin = np.ascontiguousarray(grid.R_dense())
    Cin = np.ascontiguousarray(grid.C_dense())
    tr = np.zeros(N)
    t1 = np.zeros(N)
    t2 = np.zeros(N)
    mu = np.empty(N)
    forcing = np.zeros((N, N))
    for i in range(N):
        M = kernels.row_integrals(i, Rin, Rin, Cin, nu1, nu2, psi, dt, tr, t1, t2)
        mu[i] = 0.5 + b2 * M
        forcing[i, : i + 1] = b2 * (t1[: i + 1] + t2[: i + 1])

    Rt = np.zeros((N, N))
    Ct = np.zeros((N, N))
    Rt[0, 0] = Ct[0, 0] = 1.0
    FR = np.zeros(N)
    FC = np.zeros(N)
    FR[0] = -mu[0]
    FC[0] = -mu[0] + forcing[0, 0]
    for i in range(1, N):
        Rt[i, :i] = Rt[i - 1, :i] + dt * FR[:i]
        Rt[i, i] = 1.0
        kernels.row_integrals(i, Rt, Rin, Cin, nu1, nu2, psi, dt, tr, t1, t2)
        Rt[i, :i] = Rt[i - 1, :i] + 0.5 * dt * (FR[:i] - mu[i] * Rt[i, :i] + b2 * tr[:i])
        kernels.row_integrals(i, Rt, Rin, Cin, nu1, nu2, psi, dt, tr, t1, t2)
        FR[: i + 1] = -mu[i] * Rt[i, : i + 1] + b2 * tr[: i + 1]

        Cp = Ct[i - 1, :i] + dt * FC[:i]
        FCp = -mu[i] * Cp + forcing[i, :i]
        Ct[i, :i] = Ct[i - 1, :i] + 0.5 * dt * (FC[:i] + FCp)
        Ct[i, i] = 1.0
        Ct[:i, i] = Ct[i, :i]
        FC[: i + 1] = -mu[i] * Ct[i, : i + 1] + forcing[i, : i + 1]
    Rp, Cp_ = _pack(Rt, Ct, n)
    g = TwoTimeGrid(dt, n, SPHERICAL, mix, float(beta), Rp, Cp_, np.ones(N), mu)
    g._cache["R"], g._cache["C"] = Rt, Ct
    return g


def grid_from_dense(R, C, dt, mix, beta, mu=None) -> TwoTimeGrid:
    """Wrap dense spherical arrays (e.g. a perturbed pair) as a grid."""
    R = np.asarray(R, dtype=float)
    C = np.asarray(C, dtype=float)
    n = R.shape[0] - 1
    Cs = np.tril(C) + np.tril(C, -1).T
    Rp, Cp = _pack(np.tril(R), Cs, n)
    mu = np.full(n + 1, np.nan) if mu is None else np.asarray(mu, dtype=float)
    return TwoTimeGrid(dt, n, SPHERICAL, mix, float(beta), Rp, Cp, np.ones(n + 1), mu)


def sup_sum_distance(a: TwoTimeGrid, b: TwoTimeGrid) -> float:
    """sup|R_a - R_b| + sup|C_a - C_b| over the stored triangle."""
    return float(np.max(np.abs(a.R - b.R)) + np.max(np.abs(a.C - b.C)))


# ------------------------------------------------------------ diagnostics

def fdt_section(grid: TwoTimeGrid, t: float, tau_max: float):
    """Profiles tau -> C(t+tau, t) and R(t+tau, t) for tau in [0, tau_max]."""
    j = _index(t, grid.dt, grid.n, "t")
    k = int(round(tau_max / grid.dt))
    if tau_max < 0 or abs(k * grid.dt - tau_max) > 1e-9 * max(1.0, tau_max):
        raise InvalidArgumentError("tau_max must be a non-negative mesh multiple")
    if j + k > grid.n:
        raise InvalidArgumentError(f"t + tau_max = {t + tau_max} exceeds T = {grid.T}")
    Rd, Cd = grid.R_dense(), grid.C_dense()
    rows = np.arange(j, j + k + 1)
    return Cd[rows, j].copy(), Rd[rows, j].copy()


@dataclass
class FdtDiagnostics:
    G: np.ndarray  # dense, lower triangle
    I: np.ndarray  # dense, lower triangle
    rho: float
    I_hat_estimate: float
    diag_identity_error: float
    dt: float

    def fdt_violation_sup(self, t_min: float, tau_max: float) -> float:
        """sup |G(t+tau, t)| over t >= t_min, tau <= tau_max."""
        n = self.G.shape[0] - 1
        j0 = int(round(t_min / self.dt))
        kmax = int(round(tau_max / self.dt))
        best = 0.0
        for k in range(kmax + 1):
            j = np.arange(j0, n - k + 1)
            if j.size:
                best = max(best, float(np.max(np.abs(self.G[j + k, j]))))
        return best


def _dC_dt(Cd: np.ndarray, dt: float) -> np.ndarray:
    """d/dt C(s, t) for t <= s, along each row s."""
    N = Cd.shape[0]
    out = np.zeros((N, N))
    for i in range(N):
        c = Cd[i, : i + 1]
        if i >= 2:
            out[i, 1:i] = (c[2:] - c[:-2]) / (2 * dt)
            out[i, 0] = (-3 * c[0] + 4 * c[1] - c[2]) / (2 * dt)
            out[i, i] = (3 * c[i] - 4 * c[i - 1] + c[i - 2]) / (2 * dt)
        elif i == 1:
            out[1, 0] = out[1, 1] = (c[1] - c[0]) / dt
        else:
            # only (0,0): use the column direction, s -> C(s, 0) from the right
            if N >= 3:
                out[0, 0] = -(-3 * Cd[0, 0] + 4 * Cd[1, 0] - Cd[2, 0]) / (2 * dt)
    return out


def fdt_violation(grid: TwoTimeGrid, mix: MixturePolynomial | None = None,
                  beta: float | None = None, window: float = 3.0) -> FdtDiagnostics:
    mix = grid.mix if mix is None else mix
    beta = grid.beta if beta is None else beta
    nu1, nu2, _ = mix.kernel_coeffs()
    b2 = beta * beta
    dt, n = grid.dt, grid.n
    Rd = grid.R_dense()
    Cd = np.ascontiguousarray(grid.C_dense())
    G = np.tril(Rd - 2.0 * _dC_dt(Cd, dt))
    G = np.ascontiguousarray(G)
    Cl = np.ascontiguousarray(np.tril(Cd))
    I = np.zeros((n + 1, n + 1))
    buf = np.zeros(n + 1)
    nu1_c0 = mix.nu(np.clip(Cd[:, 0], 0, None), 1)
    for i in range(n + 1):
        kernels.violation_row(i, Cl, G, nu1, nu2, dt, buf)
        I[i, : i + 1] = b2 * buf[: i + 1] - 2 * b2 * nu1_c0[i] * Cd[: i + 1, 0]
    rho = 0.5 + 2 * b2 * float(mix.nu(1.0, 1))
    diag = np.array([I[i, i] for i in range(n + 1)])
    ident = float(np.max(np.abs(diag - (grid.mu - rho))))
    kwin = int(round(window / dt))
    lags = np.arange(0, min(kwin, n) + 1)
    I_hat = float(np.mean(I[n, n - lags]))
    return FdtDiagnostics(G, I, rho, I_hat, ident, dt)


def response_bound_check(grid: TwoTimeGrid, max_rows: int = 64) -> float:
    """Worst ratio |int_{t1}^{t2} R(s,u) du|^2 / ((t2 - t1) sup K) over sampled rows."""
    n, dt = grid.n, grid.dt
    Rd = grid.R_dense()
    supK = float(np.max(grid.K))
    rows = np.unique(np.linspace(1, n, min(max_rows, n)).round().astype(int)) if n else []
    worst = 0.0
    for i in rows:
        r = Rd[i, : i + 1]
        P = np.concatenate([[0.0], np.cumsum(0.5 * dt * (r[1:] + r[:-1]))])
        diff = P[None, :] - P[:, None]
        lag = (np.arange(i + 1)[None, :] - np.arange(i + 1)[:, None]) * dt
        mask = lag > 0
        ratio = diff[mask] ** 2 / (lag[mask] * supK)
        worst = max(worst, float(ratio.max()))
    return worst
