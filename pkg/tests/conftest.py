import numpy as np
import pytest

from nvcollective.geometry import sample_ensemble
from nvcollective.units import PhysicalParams

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def small_dense():
    # dense enough that a collective mode forms at N = 12
    return sample_ensemble(12, 8.0, seed=1, min_separation=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
