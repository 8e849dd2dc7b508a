import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from arqopt.model import Model  # noqa: E402
from arqopt.scenario import load_scenario  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def fig1():
    return load_scenario("fig1")


@pytest.fixture(scope="session")
def fig1_model(fig1):
    return fig1.model()


@pytest.fixture(scope="session")
def fig2():
    return load_scenario("fig2")


@pytest.fixture(scope="session")
def fig3():
    return load_scenario("fig3")


@pytest.fixture(scope="session")
def fig3_model(fig3):
    return fig3.model()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
