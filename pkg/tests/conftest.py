from __future__ import annotations

import math

import numpy as np
import pytest

from pssim import KalikowDecomposition, ising
from pssim.kernels import nearest_neighbour


def ising_1d(beta: float, J: float = 1.0) -> KalikowDecomposition:
    return KalikowDecomposition(ising(1, beta, nearest_neighbour(1, J)))


def binom_se(p: float, n: int) -> float:
    # floor keeps the tolerance positive when the empirical frequency is 0
    return math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ising015():
    return ising_1d(0.15)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
