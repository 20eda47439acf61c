import numpy as np
import pytest

from mipipe.datamodel import Design, IntensityMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def design_2x3():
    return Design.from_groups([3, 3])


def random_matrix(rng, P, N, missing=0.0):
    values = rng.normal(10.0, 2.0, (P, N))
    if missing:
        values[rng.random((P, N)) < missing] = np.nan
    return IntensityMatrix.from_array(values)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
