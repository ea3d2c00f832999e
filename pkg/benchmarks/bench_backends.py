"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_backends.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from cklab.kernels import numba_impl, numpy_impl
from cklab.model import MixturePolynomial


def _row_case(n=800):
    rng = np.random.default_rng(0)
    A = np.tril(rng.uniform(0, 1, (n + 1, n + 1)))
    C = A + np.tril(A, -1).T
    nu1, nu2, psi = MixturePolynomial([(2, 1.0), (3, 2.0)]).kernel_coeffs()
    buf = [np.zeros(n + 1) for _ in range(3)]
    return lambda impl: impl.row_integrals(n, A, A, C, nu1, nu2, psi, 0.01, *buf)


def _fdt_case(n=20000):
    phic = np.array([0.1, 0.6, 0.3])
    return lambda impl: impl.fdt_march(phic, 0.5, 0.002, n)


def _p3_case(N=200, R=4):
    rng = np.random.default_rng(1)
    M = N * (N + 1) * (N + 2) // 6
    J = rng.standard_normal(M)
    X = rng.standard_normal((N, R))
    G = np.zeros((N, R))
    return lambda impl: impl.grad_p3(J, N, X, 1.0, G)


CASES = {
    "row_integrals (n=800)": _row_case,
    "fdt_march (n=20000)": _fdt_case,
    "grad_p3 (N=200, 4 replicas)": _p3_case,
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>9s}")
    for name, make in CASES.items():
        call = make()
        call(numba_impl)  # compile
        t = {}
        for label, impl in (("numpy", numpy_impl), ("numba", numba_impl)):
            number = 1
            best = min(timeit.repeat(lambda: call(impl), number=number, repeat=args.repeat))
            t[label] = 1e3 * best / number
        print(f"{name:32s} {t['numpy']:12.2f} {t['numba']:12.2f} {t['numpy'] / t['numba']:8.1f}x")


if __name__ == "__main__":
    main()
