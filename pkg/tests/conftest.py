import math
import warnings

import pytest

from treedisp.bands import compute_bands
from treedisp.edge import QuantumTreeModel

THETA_Q2 = math.acos(2.0 * math.sqrt(2.0) / 3.0)


@pytest.fixture(scope="session")
def free_model():
    m = QuantumTreeModel(2, 1.0, 0.0, "zero")
    compute_bands(m, 12)
    return m


@pytest.fixture(scope="session")
def cosine_model():
    m = QuantumTreeModel(2, 1.0, 0.0, "cosine:1")
    compute_bands(m, 12)
    return m


@pytest.fixture(scope="session")
def coupled_model():
    m = QuantumTreeModel(3, 1.0, 1.5, "cosine:0.5")
    compute_bands(m, 12)
    return m


@pytest.fixture
def no_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        yield


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
