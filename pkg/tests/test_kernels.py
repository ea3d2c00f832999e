"""The numba kernels and their numpy twins must agree."""
import numpy as np
import pytest

from cklab import kernels
from cklab.kernels import numpy_impl
from cklab.model import MixturePolynomial

nb = pytest.importorskip("cklab.kernels.numba_impl")

MIX = MixturePolynomial([(2, 0.5), (3, 1.2), (4, 0.7)])


def _tri(n, seed):
    rng = np.random.default_rng(seed)
    A = np.tril(rng.uniform(0, 1, (n + 1, n + 1)))
    return A, A + np.tril(A, -1).T


def test_backend_flag_selects_numba_by_default():
    assert kernels.BACKEND in ("numba", "numpy")
    if kernels.BACKEND == "numba":
        assert kernels.impl is kernels.numba_impl


def test_polyval():
    c = np.array([0.3, -1.0, 2.0, 0.5])
    x = np.linspace(-1, 2, 17)
    np.testing.assert_allclose(nb.polyval(c, x), numpy_impl.polyval(c, x), rtol=1e-14)
    assert nb.polyval(c, 0.7) == pytest.approx(numpy_impl.polyval(c, 0.7), rel=1e-14)


@pytest.mark.parametrize("i", [0, 1, 2, 17, 40])
def test_row_integrals(i):
    R, C = _tri(40, i)
    Rt, _ = _tri(40, i + 100)
    nu1, nu2, psi = MIX.kernel_coeffs()
    outs = []
    for impl in (nb, numpy_impl):
        bufs = [np.full(41, np.nan) for _ in range(3)]
        m = impl.row_integrals(i, Rt, R, C, nu1, nu2, psi, 0.05, *bufs)
        outs.append((m, [b[: i + 1] for b in bufs]))
    assert outs[0][0] == pytest.approx(outs[1][0], rel=1e-12, abs=1e-14)
    for a, b in zip(outs[0][1], outs[1][1]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("i", [0, 1, 5, 30])
def test_kraichnan_and_violation_rows(i):
    H, C = _tri(30, i)
    G, _ = _tri(30, i + 7)
    nu1, nu2, _ = MIX.kernel_coeffs()
    a, b = np.zeros(31), np.zeros(31)
    nb.kraichnan_row(i, H, C, nu2, 0.1, a)
    numpy_impl.kraichnan_row(i, H, C, nu2, 0.1, b)
    np.testing.assert_allclose(a[: i + 1], b[: i + 1], rtol=1e-12, atol=1e-14)
    Cl = np.tril(C)
    nb.violation_row(i, Cl, G, nu1, nu2, 0.1, a)
    numpy_impl.violation_row(i, Cl, G, nu1, nu2, 0.1, b)
    np.testing.assert_allclose(a[: i + 1], b[: i + 1], rtol=1e-12, atol=1e-14)


def test_fdt_march():
    phic = np.array([0.1, 0.6, 0.3])
    D1, y1, u1 = nb.fdt_march(phic, 0.5, 0.01, 500)
    D2, y2, u2 = numpy_impl.fdt_march(phic, 0.5, 0.01, 500)
    np.testing.assert_allclose(D1, D2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(y1, y2, rtol=1e-12, atol=1e-14)


def test_hform_solve():
    k = 0.3 + 0.1 * np.cos(np.linspace(0, 3, 301))
    np.testing.assert_allclose(nb.hform_solve(k, 0.01), numpy_impl.hform_solve(k, 0.01),
                               rtol=1e-12)


def test_grad_p3():
    N = 15
    M = N * (N + 1) * (N + 2) // 6
    rng = np.random.default_rng(4)
    J = rng.standard_normal(M)
    X = rng.standard_normal((N, 3))
    G1, G2 = np.zeros((N, 3)), np.zeros((N, 3))
    nb.grad_p3(J, N, X, 1.7, G1)
    numpy_impl.grad_p3(J, N, X, 1.7, G2)
    np.testing.assert_allclose(G1, G2, rtol=1e-11, atol=1e-12)


def test_grad_sparse():
    rng = np.random.default_rng(5)
    idx = np.sort(rng.integers(0, 8, (50, 4)), axis=1)
    coef = rng.standard_normal(50)
    X = rng.standard_normal((8, 2))
    G1, G2 = np.zeros((8, 2)), np.zeros((8, 2))
    nb.grad_sparse(idx, coef, X, G1)
    numpy_impl.grad_sparse(idx, coef, X, G2)
    np.testing.assert_allclose(G1, G2, rtol=1e-12, atol=1e-13)


def test_numpy_backend_end_to_end(monkeypatch):
    """A full solve through the numpy backend matches the default backend."""
    import math

    from cklab import twotime

    mix = MixturePolynomial.pure(3, math.sqrt(6))
    ref = twotime.solve_spherical(mix, 0.1, 0.05, 2.0)
    for name in ("row_integrals", "kraichnan_row", "fdt_march", "hform_solve",
                 "violation_row", "grad_p3", "grad_sparse", "polyval"):
        monkeypatch.setattr(kernels, name, getattr(numpy_impl, name))
    alt = twotime.solve_spherical(mix, 0.1, 0.05, 2.0)
    np.testing.assert_allclose(alt.C, ref.C, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(alt.R, ref.R, rtol=1e-11, atol=1e-13)


def test_env_flag_forces_numpy():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-c", "import cklab.kernels as k; print(k.BACKEND)"],
                         env={"CKLAB_DISABLE_NUMBA": "1", "PATH": ""}, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "numpy"
