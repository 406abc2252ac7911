import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ucround.fleet import Fleet, Generator, random_fleet

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k.split()[0])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def two_units():
    g1 = Generator("g1", 10.0, 100.0, 0.01, 10.0, 0.0)
    g2 = Generator("g2", 10.0, 100.0, 0.02, 8.0, 0.0)
    return g1, g2


def make_random_fleets(count: int, seed: int, n_lo: int = 4, n_hi: int = 12) -> list[Fleet]:
    rng = np.random.default_rng(seed)
    return [random_fleet(int(rng.integers(n_lo, n_hi + 1)), rng) for _ in range(count)]
