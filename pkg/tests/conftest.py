import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "gpgp", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("gpgp")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bank():
    from gpgp.render2d import default_bank

    return default_bank()


ACCEPTANCE_LINES = []


def report(line):
    """Record one acceptance verdict line for the end-of-run summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
