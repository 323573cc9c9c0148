import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hopuflow import mesh as meshmod
from hopuflow.fespace import SpaceSet

settings.register_profile("ci", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=25)
settings.load_profile("ci")


def periodic_mesh(n=4, extent=None):
    return meshmod.build_box_mesh(2, (n, n), extent, periodic_axes=(0, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def periodic_spaces():
    """Periodic 4x4 spaces for k = 1, 2, 3 (built once)."""
    m = periodic_mesh(4)
    return {k: SpaceSet(m, k) for k in (1, 2, 3)}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
