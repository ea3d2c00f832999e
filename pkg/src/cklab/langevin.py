"""Finite-N Langevin simulation of the soft-spherical mixed p-spin model.

dx = -f_L'(|x|^2/N) x dt - beta grad H_J(x) dt + dB

Couplings are indexed by non-decreasing tuples i_1 <= ... <= i_p and the
p-term of the Hamiltonian is a_p sum J_I x_I / c(I), where c(I) is the
product of the factorials of the multiplicities in I and
Var J_I = c(I) N^(1-p). With this normalisation the covariance of H_J is
exactly N nu(x.y/N).
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import kernels
from .errors import InstabilityError, InvalidArgumentError, ResourceLimitError
from .model import MixturePolynomial, SoftPotential

N_CAP = {2: 1000, 3: 1000}
NUMPY_P3_CAP = 300
MAX_SPARSE = 20_000_000
STABILITY_GUARD = 0.5
BLOWUP = 10.0


def multiplicity_factor(index) -> int:
    """c(I): product of factorials of the multiplicities in ``index``."""
    out = 1
    for _, grp in itertools.groupby(sorted(index)):
        out *= math.factorial(len(list(grp)))
    return out


def coupling_variance(index, N: int) -> float:
    return multiplicity_factor(index) * float(N) ** (1 - len(index))


def _p3_factors(N: int) -> np.ndarray:
    # lexicographic blocks (i, j) with l = j..N-1
    i = np.repeat(np.arange(N), np.arange(N, 0, -1))
    j = np.concatenate([np.arange(a, N) for a in range(N)])
    lens = N - j
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    c = np.ones(int(lens.sum()))
    diag_block = np.repeat(i == j, lens)
    c[diag_block] = 2.0
    c[starts[i != j]] = 2.0
    c[starts[i == j]] = 6.0
    return c


@dataclass
class DisorderSample:
    N: int
    seed: int
    mix: MixturePolynomial
    blocks: dict = field(default_factory=dict)

    def couplings(self, p: int) -> np.ndarray:
        """Flat couplings of the p-term in lexicographic tuple order."""
        return self.blocks[p]["J"]

    def scaled(self, factor: float) -> "DisorderSample":
        out = DisorderSample(self.N, self.seed, self.mix)
        for p, blk in self.blocks.items():
            nb = dict(blk)
            nb["J"] = blk["J"] * factor
            if "S" in blk:
                nb["S"] = blk["S"] * factor
            if "coef" in blk:
                nb["coef"] = blk["coef"] * factor
            out.blocks[p] = nb
        return out


def _rng(*words) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(words))))


def sample_disorder(mix: MixturePolynomial, N: int, seed: int) -> DisorderSample:
    if N < 2:
        raise InvalidArgumentError("N must be >= 2")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    out = DisorderSample(N, seed, mix)
    for p, a in mix.terms:
        M = math.comb(N + p - 1, p)
        cap = N_CAP.get(p)
        if p == 3 and kernels.BACKEND == "numpy":
            cap = NUMPY_P3_CAP
        if cap is not None and N > cap:
            raise ResourceLimitError(f"N={N} exceeds the cap {cap} for p={p}")
        if p >= 4 and M > MAX_SPARSE:
            raise ResourceLimitError(f"{M} couplings for p={p} exceed {MAX_SPARSE}")
        z = _rng(seed, p).standard_normal(M)
        scale = float(N) ** ((1 - p) / 2)
        if p == 2:
            iu = np.triu_indices(N)
            c = np.where(iu[0] == iu[1], 2.0, 1.0)
            J = z * np.sqrt(c) * scale
            S = np.zeros((N, N))
            # x^T S x reproduces a J_ii x_i^2 / 2 and a J_ij x_i x_j
            S[iu] = 0.5 * a * J
            S = S + np.triu(S, 1).T
            out.blocks[p] = {"J": J, "S": S, "a": a}
        elif p == 3:
            c = _p3_factors(N)
            J = z * np.sqrt(c) * scale
            out.blocks[p] = {"J": J, "a": a}
        else:
            idx = np.array(list(itertools.combinations_with_replacement(range(N), p)),
                           dtype=np.int64)
            c = np.array([multiplicity_factor(r) for r in idx], dtype=float)
            J = z * np.sqrt(c) * scale
            out.blocks[p] = {"J": J, "a": a, "idx": idx, "coef": a * J / c}
    return out


def grad_hamiltonian(disorder: DisorderSample, x) -> np.ndarray:
    """Exact gradient of H_J at ``x`` (shape (N,) or (N, replicas))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.ascontiguousarray(x[:, None] if single else x)
    if X.shape[0] != disorder.N:
        raise InvalidArgumentError("x has the wrong dimension")
    G = np.zeros_like(X)
    for p, blk in disorder.blocks.items():
        if p == 2:
            G += 2.0 * (blk["S"] @ X)
        elif p == 3:
            kernels.grad_p3(blk["J"], disorder.N, X, float(blk["a"]), G)
        else:
            kernels.grad_sparse(blk["idx"], blk["coef"], X, G)
    return G[:, 0] if single else G


def hamiltonian(disorder: DisorderSample, x) -> float:
    """H_J(x) for a single configuration (used by tests)."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for p, blk in disorder.blocks.items():
        if p == 2:
            total += float(x @ blk["S"] @ x)
        elif p == 3:
            N = disorder.N
            c = _p3_factors(N)
            i = np.repeat(np.arange(N), np.arange(N, 0, -1))
            j = np.concatenate([np.arange(a, N) for a in range(N)])
            ii = np.repeat(i, N - j)
            jj = np.repeat(j, N - j)
            ll = np.concatenate([np.arange(b, N) for b in j])
            total += float(blk["a"] * np.sum(blk["J"] / c * x[ii] * x[jj] * x[ll]))
        else:
            total += float(np.sum(blk["coef"] * np.prod(x[blk["idx"]], axis=1)))
    return total


@dataclass(frozen=True)
class LangevinConfig:
    N: int
    dt: float
    T: float
    replicas: int = 1
    seed: int = 0
    save_stride: int = 1
    disorder_seed: int | None = None

    @property
    def steps(self) -> int:
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise InvalidArgumentError("T must be an integer multiple of dt")
        if n % self.save_stride:
            raise InvalidArgumentError("save_stride must divide the number of steps")
        return n


@dataclass
class LangevinRun:
    config: LangevinConfig
    beta: float
    pot: SoftPotential
    mix: MixturePolynomial
    times: np.ndarray
    C: np.ndarray  # (replicas, S, S)
    chi: np.ndarray  # (replicas, S, S), chi[r, a, b] = x_a . B_b / N

    @property
    def C_mean(self):
        return self.C.mean(axis=0)

    @property
    def chi_mean(self):
        return self.chi.mean(axis=0)

    def _se(self, A):
        r = A.shape[0]
        if r < 2:
            return np.zeros(A.shape[1:])
        return A.std(axis=0, ddof=1) / math.sqrt(r)

    @property
    def C_se(self):
        return self._se(self.C)

    @property
    def chi_se(self):
        return self._se(self.chi)

    def to_csv(self, path, header_comment: str | None = None):
        Cm, Cs, Xm, Xs = self.C_mean, self.C_se, self.chi_mean, self.chi_se
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "t", "C_N_mean", "C_N_se", "chi_N_mean", "chi_N_se"])
            for a in range(self.times.size):
                for b in range(a + 1):
                    w.writerow([repr(float(v)) for v in
                                (self.times[a], self.times[b], Cm[a, b], Cs[a, b], Xm[a, b], Xs[a, b])])

    def metadata(self) -> str:
        c = self.config
        return json.dumps({
            "N": c.N, "dt": c.dt, "T": c.T, "replicas": c.replicas, "seed": c.seed,
            "disorder_seed": c.seed if c.disorder_seed is None else c.disorder_seed,
            "save_stride": c.save_stride, "beta": self.beta,
            "potential": {"L": self.pot.L, "k": self.pot.k},
            "mixture": self.mix.to_json(),
        }, indent=2, sort_keys=True)


def gradient_scale(mix: MixturePolynomial) -> float:
    """Rough size of the Hessian of H_J near |x|^2 = N."""
    return 2.0 * math.sqrt(mix.nu(1.5, 2))


def simulate(mix: MixturePolynomial, beta: float, pot: SoftPotential, config: LangevinConfig,
             disorder: DisorderSample | None = None) -> LangevinRun:
    pot.check_mixture(mix)
    n = config.steps
    if config.replicas < 1:
        raise InvalidArgumentError("need at least one replica")
    lam = config.dt * (2.0 * pot.L + beta * gradient_scale(mix))
    if lam > STABILITY_GUARD:
        raise InvalidArgumentError(
            f"dt*(2L + beta*scale) = {lam:.3g} exceeds {STABILITY_GUARD}; reduce dt")
    N, R = config.N, config.replicas
    if disorder is None:
        dseed = config.seed if config.disorder_seed is None else config.disorder_seed
        disorder = sample_disorder(mix, N, dseed) if beta != 0 else DisorderSample(N, dseed, mix)
    elif disorder.N != N:
        raise InvalidArgumentError("disorder sample has the wrong N")
    gens = [_rng(config.seed, 0x5EED, r) for r in range(R)]
    X = np.empty((N, R))
    for r, g in enumerate(gens):
        X[:, r] = g.standard_normal(N)
    B = np.zeros((N, R))
    stride = config.save_stride
    nsave = n // stride + 1
    Xs = np.empty((nsave, N, R))
    Bs = np.empty((nsave, N, R))
    Xs[0], Bs[0] = X, B
    sq = math.sqrt(config.dt)
    chunk = 256
    noise = np.empty((chunk, N, R))
    L, k, dt = pot.L, pot.k, config.dt
    for step in range(n):
        c = step % chunk
        if c == 0:
            m = min(chunk, n - step)
            for r, g in enumerate(gens):
                noise[:m, :, r] = g.standard_normal((m, N))
        K = np.einsum("ir,ir->r", X, X) / N
        if np.any(K > BLOWUP) or not np.all(np.isfinite(K)):
            raise InstabilityError(f"|x|^2/N blew up at t={step * dt:.4g}; reduce dt")
        fp = 2.0 * L * (K - 1.0) + 0.5 * K ** (2 * k - 1)
        drift = -fp[None, :] * X
        if beta != 0:
            drift -= beta * grad_hamiltonian(disorder, X)
        dB = sq * noise[c]
        X = X + dt * drift + dB
        B = B + dB
        if (step + 1) % stride == 0:
            s = (step + 1) // stride
            Xs[s], Bs[s] = X, B
    K = np.einsum("ir,ir->r", X, X) / N
    if np.any(K > BLOWUP) or not np.all(np.isfinite(K)):
        raise InstabilityError("|x|^2/N blew up at the final time; reduce dt")
    C = np.einsum("air,bir->rab", Xs, Xs) / N
    chi = np.einsum("air,bir->rab", Xs, Bs) / N
    times = np.arange(nsave) * stride * dt
    return LangevinRun(config, float(beta), pot, mix, times, C, chi)


@dataclass
class DiscrepancyReport:
    sup_C: float
    rms_C: float
    sup_chi: float
    rms_chi: float
    se_C_max: float
    se_chi_max: float
    n_pairs: int

    @property
    def sup(self) -> float:
        return max(self.sup_C, self.sup_chi)

    def as_dict(self):
        d = dict(self.__dict__)
        d["sup"] = self.sup
        return d


def limit_chi(grid) -> np.ndarray:
    """chi(s,t) = int_0^min(s,t) R(s,u) du on the grid mesh (dense)."""
    Rd = grid.R_dense()
    dt = grid.dt
    P = np.zeros_like(Rd)
    P[:, 1:] = np.cumsum(0.5 * dt * (Rd[:, 1:] + Rd[:, :-1]), axis=1)
    # the cumulative integral along a row stops growing once u passes s
    n = Rd.shape[0]
    for i in range(n):
        P[i, i + 1:] = P[i, i]
    return P


def compare_to_limit(run: LangevinRun, grid) -> DiscrepancyReport:
    if run.times[-1] > grid.T * (1 + 1e-12) + 1e-12:
        raise InvalidArgumentError(
            f"run horizon {run.times[-1]} exceeds grid horizon {grid.T}")
    mesh = grid.times
    Ci = RegularGridInterpolator((mesh, mesh), grid.C_dense())
    Xi = RegularGridInterpolator((mesh, mesh), limit_chi(grid))
    a, b = np.tril_indices(run.times.size)
    pts = np.stack([run.times[a], run.times[b]], axis=1)
    dC = run.C_mean[a, b] - Ci(pts)
    dX = run.chi_mean[a, b] - Xi(pts)
    return DiscrepancyReport(
        sup_C=float(np.max(np.abs(dC))),
        rms_C=float(np.sqrt(np.mean(dC ** 2))),
        sup_chi=float(np.max(np.abs(dX))),
        rms_chi=float(np.sqrt(np.mean(dX ** 2))),
        se_C_max=float(np.max(run.C_se[a, b])),
        se_chi_max=float(np.max(run.chi_se[a, b])),
        n_pairs=int(a.size),
    )
