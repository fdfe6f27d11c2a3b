import numpy as np
import pytest
from hypothesis import settings

from lipsched.flow import figure3_map
from lipsched.schedule import optimal_schedule, transition_time
from lipsched.spectral import bounds_from_field, field_from_map1d

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def gmm_map():
    return figure3_map(1e-4)


@pytest.fixture(scope="session")
def gmm_field(gmm_map):
    return field_from_map1d(gmm_map, n=2001)


@pytest.fixture(scope="session")
def gmm_bounds(gmm_field):
    return bounds_from_field(gmm_field)


@pytest.fixture(scope="session")
def gmm_optimal(gmm_bounds):
    return optimal_schedule(gmm_bounds)


def transition_pairs(rng, n):
    """Random (f*, g*) pairs with g* < 0 < f* that admit an interior transition."""
    out = []
    while len(out) < n:
        f = 10 ** rng.uniform(-2, 3)
        g = -(10 ** rng.uniform(-3, np.log10(0.999999)))
        if transition_time((f, g)) is not None:
            out.append((f, g))
    return out


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
