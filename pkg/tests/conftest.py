import numpy as np
import pytest

from apnls import Basis

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def b2():
    """The workhorse basis (1, sqrt 2)."""
    return Basis((1.0, "sqrt2"))


@pytest.fixture
def b1():
    return Basis((1.0,))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
