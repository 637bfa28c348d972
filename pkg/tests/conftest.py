import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from neurofem import mesh as meshmod

settings.register_profile("default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def two_cell_square():
    """Unit square split along one diagonal."""
    return meshmod.generate_rectangle(1.0, 1.0, 1, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
