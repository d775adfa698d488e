import numpy as np
import pytest

from ddlqg.lti_sim import NoiseSpec, collect_offline_data
from ddlqg.systems import batch_reactor, rotating_target, scalar_system


@pytest.fixture(scope="session")
def reactor():
    return batch_reactor()


@pytest.fixture(scope="session")
def reactor_data(reactor):
    return collect_offline_data(reactor, 15, NoiseSpec.zero(), seed=1)


@pytest.fixture(scope="session")
def reactor_noisy_data(reactor):
    return collect_offline_data(reactor, 15, NoiseSpec.uniform(0.02, 0.02), seed=2)


@pytest.fixture(scope="session")
def scalar():
    return scalar_system()


@pytest.fixture(scope="session")
def target():
    return rotating_target()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
