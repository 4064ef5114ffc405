from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_superlevel_pairs(rng, n_max=5, lo=0.0, hi=1.0):
    """Random (birth, death) pairs with birth >= death."""
    n = int(rng.integers(0, n_max + 1))
    a = rng.uniform(lo, hi, size=(n, 2))
    return np.column_stack([a.max(axis=1), a.min(axis=1)])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
