import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quasicontact.dispersal import GaussianKernel, UniformBallKernel
from quasicontact.hierarchy import Model, TorusGrid
from quasicontact.markspace import MarkSpace, MutationKernel

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# keep the suite deterministic regardless of the host core count
os.environ.setdefault("QUASICONTACT_WORKERS", "1")


def symmetric_pair_kernel(weights=(0.5, 0.5)):
    ms = MarkSpace(("a", "b"), np.asarray(weights, dtype=float))
    return MutationKernel(np.array([[2.0, 1.0], [1.0, 2.0]]), ms)


@pytest.fixture
def warmup_model():
    """Unmarked, kappa = 0.5, c = 0.5, uniform-ball alpha on the d=1, N=64 grid."""
    return Model.build(0.5, MutationKernel.point(), [0.5], UniformBallKernel(1, 1.0),
                       TorusGrid(1, 32.0, 64))


@pytest.fixture
def gaussian_warmup_model():
    return Model.build(0.5, MutationKernel.point(), [0.5], GaussianKernel([[1.0]]),
                       TorusGrid(1, 32.0, 64))


@pytest.fixture
def marked_model():
    """m = 2, Q = [[2,1],[1,2]], nu = (1/2, 1/2): r = 1.5, effective kappa 0.3."""
    return Model.build(0.2, symmetric_pair_kernel(), [1.0, 2.0], GaussianKernel([[1.0]]),
                       TorusGrid(1, 24.0, 32))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
