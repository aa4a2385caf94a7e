import math

import numpy as np
import pytest

from graphnls.functional import ProblemParams, compute_thresholds, gn_estimate
from graphnls.graph import assemble, interval, lollipop, loop, star
from graphnls.spectrum import eigenpairs

P = 7.0


@pytest.fixture(scope="session")
def d_interval():
    return assemble(interval(), 64)


@pytest.fixture(scope="session")
def spec_interval(d_interval):
    return eigenpairs(d_interval, 10)


@pytest.fixture(scope="session")
def kest_interval(d_interval):
    return gn_estimate(d_interval, P)


@pytest.fixture(scope="session")
def report_unit(spec_interval, kest_interval):
    """Thresholds for indices 2..4 evaluated at mu = 1."""
    return compute_thresholds(ProblemParams(P, 1.0), kest_interval, spec_interval, (2, 3, 4))


@pytest.fixture(scope="session")
def mu_small(report_unit):
    return 0.5 * report_unit.mu2


@pytest.fixture(scope="session")
def report_small(spec_interval, kest_interval, mu_small):
    return compute_thresholds(ProblemParams(P, mu_small), kest_interval, spec_interval, (2,))


@pytest.fixture(scope="session")
def three_graphs():
    return {
        "interval": assemble(interval(), 48),
        "star": assemble(star(3), 24),
        "lollipop": assemble(lollipop(), 24),
    }


@pytest.fixture(scope="session")
def d_loop():
    return assemble(loop(), 128)
