import logging

import numpy as np
import pytest
from hypothesis import settings

from stocheuler.spectral import Grid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    # CFL warnings are expected in several deliberately coarse runs
    logging.getLogger("stocheuler").setLevel(logging.ERROR)
    yield
    logging.getLogger("stocheuler").setLevel(logging.NOTSET)


@pytest.fixture
def grid16():
    return Grid(16)


@pytest.fixture
def grid32():
    return Grid(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_log():
    def record(line: str):
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
