import math

import numpy as np
import pytest

from cklab import model, twotime
from cklab.errors import InvalidArgumentError, ResourceLimitError

SQRT6 = math.sqrt(6.0)
PURE3 = model.MixturePolynomial.pure(3, SQRT6)


@pytest.fixture(scope="module")
def free():
    return twotime.solve_spherical(PURE3, 0.0, 0.01, 6.0)


@pytest.fixture(scope="module")
def hot():
    return twotime.solve_spherical(PURE3, 0.3, 0.01, 4.0)


def test_free_dynamics_exact(free):
    s = free.times
    lag = np.abs(s[:, None] - s[None, :])
    assert np.max(np.abs(free.C_dense() - np.exp(-lag / 2))) < 1e-5
    assert np.max(np.abs(np.tril(free.R_dense() - np.exp(-lag / 2)))) < 1e-5
    assert np.allclose(free.mu, 0.5)


def test_invariants(hot):
    R, C = hot.R_dense(), hot.C_dense()
    assert np.allclose(np.diag(R), 1.0) and np.allclose(np.diag(C), 1.0)
    assert np.array_equal(C, C.T)
    low = np.tril_indices(hot.n + 1)
    assert R[low].min() >= 0.0 and C.min() >= 0.0 and C.max() <= 1.0 + 1e-12
    assert hot.R_at(5, 2) == R[5, 2]
    assert hot.C_at(2, 5) == C[5, 2]
    with pytest.raises(InvalidArgumentError):
        hot.R_at(2, 5)


def test_mesh_refinement_is_second_order():
    ref = twotime.solve_spherical(PURE3, 0.3, 0.0025, 2.0)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        g = twotime.solve_spherical(PURE3, 0.3, dt, 2.0)
        k = int(round(dt / 0.0025))
        errs.append(np.max(np.abs(g.C_dense() - ref.C_dense()[::k, ::k])))
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


def test_checkpoint_round_trip(tmp_path, hot):
    p = tmp_path / "g.ttgrid"
    hot.save(p)
    back = twotime.TwoTimeGrid.load(p)
    assert back.mix == hot.mix and back.dt == hot.dt and back.n == hot.n
    for a in ("R", "C", "K", "mu"):
        assert np.array_equal(getattr(back, a), getattr(hot, a))
    p2 = tmp_path / "g2.ttgrid"
    back.save(p2)
    assert p.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path, hot):
    p = tmp_path / "bad"
    p.write_bytes(b"NOTAGRID" + bytes(64))
    with pytest.raises(InvalidArgumentError):
        twotime.TwoTimeGrid.load(p)
    hot.save(p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(InvalidArgumentError):
        twotime.TwoTimeGrid.load(p)


def test_soft_checkpoint_keeps_potential(tmp_path):
    g = twotime.solve_soft(PURE3, 0.05, model.SoftPotential(10.0, 1), 0.05, 1.0, K0=1.2)
    g.save(tmp_path / "s")
    back = twotime.TwoTimeGrid.load(tmp_path / "s")
    assert back.mode == twotime.SOFT and back.soft == (10.0, 1, 1.2)
    assert np.array_equal(back.K, g.K)


def test_psi_fixes_free_solution(free):
    assert twotime.sup_sum_distance(twotime.apply_psi(free), free) < 1e-12


def test_psi_near_fixed_point_and_contracts(hot):
    assert twotime.sup_sum_distance(twotime.apply_psi(hot), hot) < 20 * hot.dt
    lag = np.tril(hot.times[:, None] - hot.times[None, :])
    damp = np.exp(-0.1 * lag)
    x = twotime.grid_from_dense(hot.R_dense() * damp, hot.C_dense() * damp, hot.dt, PURE3, 0.3)
    d0 = twotime.sup_sum_distance(x, hot)
    d1 = twotime.sup_sum_distance(twotime.apply_psi(x), hot)
    assert d1 < 0.72 * d0


def test_soft_solver_relaxes_to_sphere():
    dists = []
    sph = twotime.solve_spherical(PURE3, 0.05, 0.01, 2.0)
    for L in (10.0, 100.0):
        g = twotime.solve_soft(PURE3, 0.05, model.SoftPotential(L, 1), 0.01, 2.0)
        assert g.K.min() > 0
        dists.append(twotime.sup_sum_distance(g, sph))
    assert dists[1] < dists[0]


def test_soft_guard_and_validation():
    pot = model.SoftPotential(100.0, 1)
    with pytest.raises(InvalidArgumentError):
        twotime.solve_soft(PURE3, 0.05, pot, 0.01, 1.0, substeps=1)
    with pytest.raises(InvalidArgumentError):
        twotime.solve_soft(PURE3, 0.05, pot, 0.01, 1.0, K0=0.0)
    with pytest.raises(InvalidArgumentError):
        twotime.solve_soft(model.MixturePolynomial.pure(6), 0.05, pot, 0.01, 1.0)


def test_mesh_caps():
    with pytest.raises(ResourceLimitError):
        twotime.solve_spherical(PURE3, 0.05, 0.001, 5.0)
    with pytest.raises(InvalidArgumentError):
        twotime.solve_spherical(PURE3, 0.05, 0.03, 1.0)


def test_response_bound_free_case(free):
    # ratio (2(1 - e^{-tau/2}))^2 / tau peaks at 0.8145
    tau = np.linspace(1e-3, 6, 60001)
    peak = np.max((2 * (1 - np.exp(-tau / 2))) ** 2 / tau)
    assert twotime.response_bound_check(free) == pytest.approx(peak, abs=2e-3)
    assert peak == pytest.approx(0.8145, abs=1e-4)


def test_response_bound_hot(hot):
    assert twotime.response_bound_check(hot) <= 1 + 20 * hot.dt


def test_fdt_violation_free_case(free):
    dg = twotime.fdt_violation(free)
    assert dg.fdt_violation_sup(1.0, 3.0) < 1e-4
    assert dg.rho == 0.5
    assert dg.diag_identity_error < 1e-12


def test_fdt_section_and_csv(tmp_path, hot):
    C, R = twotime.fdt_section(hot, 1.0, 2.0)
    assert C.size == R.size == 201 and C[0] == 1.0
    with pytest.raises(InvalidArgumentError):
        twotime.fdt_section(hot, 3.0, 2.0)
    hot.write_section_csv(tmp_path / "sec.csv", 1.0, 2.0, "hdr")
    hot.write_lag_csv(tmp_path / "lag.csv", 0.5, "hdr")
    hot.write_diagonal_csv(tmp_path / "d.csv", "hdr")
    assert (tmp_path / "sec.csv").read_text().splitlines()[1] == "tau,C,R"
    assert (tmp_path / "lag.csv").read_text().splitlines()[1] == "t,C,R"
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 2 + hot.n + 1
