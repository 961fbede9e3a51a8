import numpy as np
import pytest

from relboltz.geometry import flrw_power, minkowski, schwarzschild
from relboltz.rng import CounterRNG


@pytest.fixture
def rng():
    return CounterRNG(12345, 0)


@pytest.fixture
def mink():
    return minkowski()


@pytest.fixture
def schw():
    return schwarzschild(1.0)


@pytest.fixture
def frw():
    return flrw_power(1.0)


def random_points(chart, n, rng, stream=0):
    """Interior sample points for each built-in chart."""
    u = rng.spawn(900 + stream).uniform(np.arange(n), 4)
    if chart.name.startswith("schwarzschild"):
        lo, hi = np.array([0.0, 3.0, 0.3, 0.0]), np.array([10.0, 30.0, 2.8, 6.2])
    elif chart.name.startswith("flrw"):
        lo, hi = np.array([0.5, -5.0, -5.0, -5.0]), np.array([3.0, 5.0, 5.0, 5.0])
    else:
        lo, hi = np.array([-5.0] * 4), np.array([5.0] * 4)
    return lo + (hi - lo) * u


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
