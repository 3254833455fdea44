import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tsmech.stochastic import CorrelationSpec, FluctuatingScalar, StochasticParams

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GPA = 1e9


def damage_params(rel_std=0.15):
    return StochasticParams({"lambda": FluctuatingScalar(12 * GPA, rel_std * 12 * GPA),
                             "mu": FluctuatingScalar(8 * GPA, rel_std * 8 * GPA)},
                            elastic_sources=[("lambda", "mu")])


def vp_params(rel=(0.1, 0.1, 0.2)):
    return StochasticParams({"lambda": FluctuatingScalar(12 * GPA, rel[0] * 12 * GPA),
                             "mu": FluctuatingScalar(8 * GPA, rel[1] * 8 * GPA),
                             "sigma_y": FluctuatingScalar(50e6, rel[2] * 50e6)},
                            elastic_sources=[("lambda", "mu")], scalar_sources=["sigma_y"])


def phase_params(rel=0.1):
    vals = {"lambda_1": 70 * GPA, "mu_1": 30 * GPA, "lambda_2": 35 * GPA, "mu_2": 15 * GPA}
    return StochasticParams({k: FluctuatingScalar(v, rel * v) for k, v in vals.items()},
                            elastic_sources=[("lambda_1", "mu_1"), ("lambda_2", "mu_2")])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def independent():
    return CorrelationSpec()


@pytest.fixture
def dependent():
    return CorrelationSpec("fully_dependent")


ACCEPTANCE_LINES = []


def report(line):
    """Record one acceptance verdict; all of them are echoed in the terminal summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
