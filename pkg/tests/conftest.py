import numpy as np
import pytest

from seqcf import ExperimentLog


def random_log(rng, N, T, A, p=None, scale=1.0, ties=False):
    """Small log with uniform assignment; ``ties`` rounds outcomes to create exact duplicates."""
    treat = rng.integers(0, A, size=(N, T))
    Y = rng.normal(size=(N, T)) * scale
    if ties:
        Y = np.round(Y)
    P = np.full((N, T, A), 1.0 / A)
    return ExperimentLog(treat, Y, P)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance criteria record one line each here; printed at the end of the run.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
