import numpy as np
import pytest

from nlhlab.derham import build_complex, cavity_cube, fixture, solid_cube

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def solid5():
    return build_complex(solid_cube(5))


@pytest.fixture(scope="session")
def solid9():
    return build_complex(solid_cube(9))


@pytest.fixture(scope="session")
def cavity9():
    return build_complex(cavity_cube(9, 3))


@pytest.fixture(scope="session")
def two_cavity_cx():
    return build_complex(fixture("two-cavity"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
