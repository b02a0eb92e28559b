import numpy as np
import pytest

from ssidepth.grids import ScalarGrid, ValidityMask


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def grid(values, unit="disparity"):
    return ScalarGrid(np.asarray(values, dtype=float), unit)


def full_mask(g):
    return ValidityMask.like(g)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
