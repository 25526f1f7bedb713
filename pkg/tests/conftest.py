import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from superconv import BasisTag, Family, Field, space_for

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def cos_mode(N, k=1, amp=1.0):
    """Fourier field amp*cos(2 pi k x) (real basis is sqrt2 cos, sqrt2 sin)."""
    c = np.zeros(2 * N + 1)
    c[2 * k - 1] = amp / np.sqrt(2)
    return Field(BasisTag(Family.FOURIER, N), c)


def const_field(N, value=1.0):
    c = np.zeros(2 * N + 1)
    c[0] = value
    return Field(BasisTag(Family.FOURIER, N), c)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
