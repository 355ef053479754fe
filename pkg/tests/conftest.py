import numpy as np
import pytest

from branchimm.model import BranchingSpec, build_generator, single_type


def binary(p0, p2, lifetime=1.0, immigrant=((1, 1.0),)):
    return single_type(lifetime, [(0, p0), (2, p2)], immigrant)


@pytest.fixture
def critical():
    return binary(0.5, 0.5)


@pytest.fixture
def subcritical():
    # rho = -0.5
    return binary(0.75, 0.25)


@pytest.fixture
def supercritical():
    # rho = 0.5
    return binary(0.25, 0.75)


@pytest.fixture
def two_type():
    # M = [[.5, .5], [.25, .75]], critical
    return BranchingSpec.from_pairs(
        [1.0, 1.0],
        [[([1, 1], 0.5), ([0, 0], 0.5)],
         [([1, 1], 0.25), ([0, 1], 0.5), ([0, 0], 0.25)]],
        [([1, 0], 0.5), ([0, 1], 0.5)],
    )


@pytest.fixture
def gen_of():
    return build_generator


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_CRITERIA = {}


@pytest.fixture(scope="session")
def criterion_log():
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
