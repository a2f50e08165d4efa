import numpy as np
import pytest

from fairaw.experiments import random_system
from fairaw.model import validate_coupling

TWO_BY_TWO = [[2.0, -1.0], [-0.5, 2.0]]


def draw_systems(count, seed, n_range=(5, 15)):
    """Seeded random systems from the study recipe."""
    seqs = np.random.SeedSequence(seed).spawn(count)
    return [random_system(np.random.default_rng(s), n_range) for s in seqs]


@pytest.fixture(scope="session")
def two_by_two():
    return validate_coupling(TWO_BY_TWO)


@pytest.fixture(scope="session")
def systems_200():
    return draw_systems(200, seed=7)


@pytest.fixture(scope="session")
def small_systems():
    return draw_systems(40, seed=11, n_range=(1, 3))


# acceptance verdict lines, shown after the run regardless of output capture
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
