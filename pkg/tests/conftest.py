import numpy as np
import pytest

from eulerlimit.green import GreenKernel

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def kernel2():
    return GreenKernel(2)


@pytest.fixture(scope="session")
def kernel3():
    return GreenKernel(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
