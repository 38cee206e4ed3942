import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mfg_inverse.forward_solver import ForwardConfig
from mfg_inverse.spectral_domain import SpaceGrid, TimeGrid, build_interval_basis, full_grid_basis

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def space():
    return SpaceGrid(65)


@pytest.fixture(scope="session")
def time():
    return TimeGrid(0.25, 100)


@pytest.fixture(scope="session")
def full_basis(space):
    return full_grid_basis(space)


@pytest.fixture(scope="session")
def analytic_basis(space):
    return build_interval_basis(space, 8)


@pytest.fixture(scope="session")
def tight_cfg():
    return ForwardConfig(picard_tol=1e-14)


def mbar(i, grid):
    x = grid.axis
    return np.ones_like(x) if i == 0 else np.sqrt(2.0) * np.cos(i * np.pi * x)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance_log(request):
    return request.config.acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
