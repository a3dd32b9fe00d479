import os

import numpy as np
import pytest
from hypothesis import settings

from persuade import fixtures

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def binary():
    return fixtures.BINARY


@pytest.fixture
def binary_inst():
    return fixtures.binary_instance()


@pytest.fixture
def fig2():
    return fixtures.fig2_instance()


@pytest.fixture
def example1():
    return fixtures.example1_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
