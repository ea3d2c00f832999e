"""Acceptance suite A1-A11, each at its stated tolerance.

Every criterion prints one PASS/FAIL line (also collected into the
terminal summary). A7 is split so that the plateau value at t = 40 is
reported on its own: the exact solution of that case sits 0.0445 above
the plateau at t = 40, outside the 0.01 band.
"""
import pytest

from cklab import acceptance

from .conftest import ACCEPTANCE_LINES

_RESULTS: dict = {}


@pytest.fixture(scope="module", autouse=True)
def _warm():
    acceptance.clear_cache()
    acceptance.warm_up()
    yield
    acceptance.clear_cache()


def _run(cid):
    if cid not in _RESULTS:
        fn = acceptance.CRITERIA[cid]
        res = fn("full") if cid == "A10" else fn()
        _RESULTS[cid] = res
        ACCEPTANCE_LINES[cid] = res.line()
        print(res.line())
    return _RESULTS[cid]


def _assert_checks(res, exclude=()):
    bad = [c for c in res.checks if not c.passed and c.name not in exclude]
    assert not bad, "; ".join(f"{c.name}={c.value:.4g} (limit {c.limit:.4g})" for c in bad)


@pytest.mark.parametrize("cid", ["A1", "A2", "A3", "A4", "A5", "A6", "A8", "A9", "A11"])
def test_criterion(cid):
    _assert_checks(_run(cid))


PLATEAU_CHECK = "|D(40)-0.5|"


def test_A7_constant_kernel_solvers_and_tail_rate():
    _assert_checks(_run("A7"), exclude=(PLATEAU_CHECK,))


def test_A7_equality_case_within_band_at_t40():
    res = _run("A7")
    (check,) = [c for c in res.checks if c.name == PLATEAU_CHECK]
    assert check.passed, f"{check.name}={check.value:.4g} (limit {check.limit:.4g}); {res.note}"


@pytest.mark.slow
def test_A10_langevin():
    _assert_checks(_run("A10"))


def test_every_criterion_listed_once():
    assert list(acceptance.CRITERIA) == [f"A{k}" for k in range(1, 12)]
