import time

import numpy as np
import pytest

from ruling_shock import factor as fac
from ruling_shock import gibbs, mixture as mix
from ruling_shock import synthetic as syn
from ruling_shock.panel import compute_scale, demean, difference_horizon


def horizon0(data):
    panel = demean(data.panel)
    hp = difference_horizon(panel, 0)
    return panel, hp, compute_scale(hp)


def target_restriction(panel, pattern="*ciss*"):
    return fac.SignRestriction.from_glob(panel.labels, pattern)


@pytest.fixture(scope="session")
def synthetic_default():
    return syn.generate(syn.SyntheticSpec())


@pytest.fixture(scope="session")
def default_run(synthetic_default):
    """Horizon-0 chain at the default configuration on the default synthetic panel."""
    panel, hp, omega = horizon0(synthetic_default)
    start = time.perf_counter()
    draws = gibbs.run_chain(hp, synthetic_default.events, omega, mix.MixturePriors(),
                            fac.FactorPriors(), target_restriction(panel), gibbs.ChainConfig(seed=3))
    return draws, time.perf_counter() - start


@pytest.fixture(scope="session")
def default_chain(default_run):
    return default_run[0]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
