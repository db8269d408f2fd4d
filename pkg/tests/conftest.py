import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ksns import grid as g

settings.register_profile(
    "ksns", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ksns")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid2():
    return g.TorusGrid(2, 32, 2.0)


@pytest.fixture
def grid1():
    return g.TorusGrid(1, 128, 8.0)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)`` for the acceptance summary, then print it."""

    def report(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
