import numpy as np
import pytest
from hypothesis import settings

from motsflow.grid import RadialGrid
from motsflow.initial_data import DataFamily, make_dataset

# fixed example sequence so that repeated runs see the same cases
settings.register_profile("motsflow", derandomize=True)
settings.load_profile("motsflow")

ACCEPTANCE_LINES = []


def record_acceptance(number, name, passed, detail=""):
    line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}  {name}"
    if detail:
        line += f"  [{detail}]"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def flat():
    return make_dataset(DataFamily("flat"))


@pytest.fixture(scope="session")
def schwarzschild():
    return make_dataset(DataFamily("schwarzschild_isotropic", mass=1.0))


@pytest.fixture(scope="session")
def const_trace():
    return make_dataset(DataFamily("constant_trace", c=0.3))


@pytest.fixture(scope="session")
def gaussian():
    return make_dataset(DataFamily("gaussian_pinch", c=3.0, r0=0.7, width=0.2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_grid(data, N=201):
    return RadialGrid(data.r_in, data.r_out, N)
