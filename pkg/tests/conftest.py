import math

import pytest
from hypothesis import HealthCheck, settings

from cklab.model import MixturePolynomial

settings.register_profile(
    "cklab", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("cklab")

SQRT6 = math.sqrt(6.0)


@pytest.fixture
def pure2():
    return MixturePolynomial.pure(2, 1.0)


@pytest.fixture
def pure3():
    return MixturePolynomial.pure(3, SQRT6)


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_LINES, key=lambda c: int(c[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[cid])
