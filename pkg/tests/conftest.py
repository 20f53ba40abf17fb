import numpy as np
import pytest

from phmor.bench.models import generate_msd_chain


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_chain():
    """Soft damped chain, N = 20."""
    return generate_msd_chain(10, 1.0, 100.0, 0.5)


@pytest.fixture(scope="session")
def bench():
    from _shared import default_benchmark
    return default_benchmark()


def pytest_terminal_summary(terminalreporter):
    from _shared import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
