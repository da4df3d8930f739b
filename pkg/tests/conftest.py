import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from proxpath.data import Dataset
from proxpath.dgp import default_spec, simulate

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def spec():
    return default_spec()


@pytest.fixture(scope="session")
def big(spec):
    """One well-specified draw at n = 1e5, shared by the large-sample checks."""
    return simulate(spec, 100_000, seed=20240)


@pytest.fixture
def small(spec):
    return simulate(spec, 400, seed=3)


def tiny_dataset(y=(1.0, 2.0, 3.0), a=(1, 0, 1)):
    n = len(y)
    rng = np.random.default_rng(0)
    return Dataset(np.asarray(y, float), np.asarray(a, float), *(rng.normal(size=n) for _ in range(5)))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
