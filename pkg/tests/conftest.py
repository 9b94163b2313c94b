import math

import pytest

from randwave.grid import Grid, sample_profile


@pytest.fixture(scope="session")
def g1():
    return Grid(1, 1024, 40.0)


@pytest.fixture(scope="session")
def g2():
    return Grid(2, 256, 20.0)


def unit_gaussian(grid, width=1.0):
    """Gaussian exp(-|x|^2/width^2) scaled to unit L^2 norm."""
    amp = (2 / (math.pi * width * width)) ** (grid.d / 4)
    return sample_profile(grid, "gaussian", amplitude=amp, width=width)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, res in RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if res['passed'] else 'FAIL'}  {name}")
