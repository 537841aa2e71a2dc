import numpy as np
import pytest

from cellfree_ris.channel import SystemDims
from cellfree_ris.checks import random_channel_set
from cellfree_ris.ris import random_phases
from cellfree_ris.precoding import initial_precoder

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_instance(rng):
    dims = SystemDims(L=2, K=3, R=2, M=3, Nt=2, Nr=2)
    cs = random_channel_set(dims, rng)
    phases = random_phases(dims, rng)
    F = initial_precoder(dims.L, dims.K, dims.Nt, 1.0, rng)
    noise = rng.uniform(0.2, 1.0, dims.K)
    weights = rng.uniform(0.5, 2.0, dims.K)
    return dims, cs, phases, F, noise, weights


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
