import numpy as np
import pytest

from gadmm_lab.problem import make_synthetic


@pytest.fixture
def small_problem():
    return make_synthetic(6, 4, samples_per_worker=12, condition=10.0, heterogeneity=0.3, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
