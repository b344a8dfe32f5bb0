from functools import lru_cache

import numpy as np
import pytest

from fracplap.energy import make_operator
from fracplap.grid import build_grid


@lru_cache(maxsize=None)
def grid(N=64, a=0.0, b=1.0):
    return build_grid(a, b, N)


@lru_cache(maxsize=None)
def operator(s, p, N=64, K=1.0):
    return make_operator(grid(N), s, p, K)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
