import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from stochreg import pipeline as pl  # noqa: E402
from stochreg.io import load_example  # noqa: E402


@pytest.fixture(scope="session")
def ex1():
    return load_example("example1")


@pytest.fixture(scope="session")
def ex2():
    return load_example("example2")


@pytest.fixture(scope="session")
def front1(ex1):
    return pl.front_end(ex1)


@pytest.fixture(scope="session")
def front2(ex2):
    return pl.front_end(ex2)


@pytest.fixture(scope="session")
def design1(ex1, front1):
    return pl.synthesize(ex1, gamma=0.1, lam=2.0, front=front1)


@pytest.fixture(scope="session")
def design2(ex2, front2):
    return pl.synthesize(ex2, gamma=0.1, lam=4.5, front=front2)


@pytest.fixture(scope="session")
def cl1(ex1, design1):
    return pl.closed_loop(ex1, design1.regulator, design1.front)


@pytest.fixture(scope="session")
def cl2(ex2, design2):
    return pl.closed_loop(ex2, design2.regulator, design2.front)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
