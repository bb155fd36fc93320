import numpy as np
import pytest

from hostmix import builtin_illustrative, pair_network, ten_host_network

# The ten initial abundance vectors used by the ten-host experiments.
TEN_HOST_INITIAL = np.array([
    [12.0, 12.0], [2.0, 2.0], [12.0, 2.0], [2.0, 2.0], [12.0, 12.0],
    [12.0, 12.0], [2.0, 2.0], [12.0, 2.0], [2.0, 12.0], [2.0, 12.0],
])


@pytest.fixture(scope="session")
def illustrative():
    return builtin_illustrative()


@pytest.fixture(scope="session")
def attractors(illustrative):
    return np.array(illustrative.attractors)


@pytest.fixture
def pair():
    return pair_network()


@pytest.fixture
def ten_hosts():
    return ten_host_network()


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
