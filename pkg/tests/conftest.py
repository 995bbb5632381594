import numpy as np
import pytest

from pulsefront.reaction import LogisticReaction, PeriodicReaction


@pytest.fixture
def unit_logistic():
    return LogisticReaction(1.0)


@pytest.fixture
def sine_logistic():
    """mu(x) = 2 + sin(2 pi x), L = 1."""
    return LogisticReaction(2.0, fourier_sine=(1.0,))


@pytest.fixture
def periodic_pair():
    r1 = LogisticReaction(1.0, fourier_cosine=(0.5,))
    r2 = LogisticReaction(1.0, fourier_cosine=(0.3,), fourier_sine=(0.4,))
    return r1, r2


def closure_reaction(mu, a=1.0, period=1.0, name="closure"):
    """Logistic-type reaction given only as a closure (derivatives by differences)."""
    return PeriodicReaction(f=lambda u, x: mu(np.asarray(x, float)) * (a - np.asarray(u, float)),
                            period=period, zero_level=a, name=name)


# one summary line per acceptance criterion, printed after the run
CRITERIA = {}


def record_criterion(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        passed, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
