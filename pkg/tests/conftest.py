import pytest

from micromix.flow import FlowConditions, solve_flow
from micromix.geometry import UnitParams, build_plain_network, build_sgm_network, build_snr_network, voxelize

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def _solve(network, spacing, cond):
    grid = voxelize(network, spacing)
    return grid, solve_flow(grid, cond)


@pytest.fixture(scope="session")
def snr_flow():
    """Three SNR units at 10 um, Re = 1."""
    return _solve(build_snr_network(UnitParams(), 3), 10.0, FlowConditions.from_reynolds(1.0))


@pytest.fixture(scope="session")
def sgm_flow():
    """Two SGM units at 10 um, Re = 1."""
    return _solve(build_sgm_network(UnitParams(), 2), 10.0, FlowConditions.from_reynolds(1.0))


@pytest.fixture(scope="session")
def duct_flow():
    """Square 100 um duct, 400 um long, at 10 um."""
    return _solve(build_plain_network(UnitParams(), 400.0), 10.0, FlowConditions.from_reynolds(1.0))
