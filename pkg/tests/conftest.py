import time

import numpy as np
import pytest

from fblab.solver import load_scenario, locate_last_contact, solve

_SOLVES = {}
_SECONDS = {}


def solved(name: str, h: float | None = None):
    """Solve a packaged scenario once per session (optionally at another resolution)."""
    key = (name, h)
    if key not in _SOLVES:
        t0 = time.perf_counter()
        _SOLVES[key] = solve(load_scenario(name, resolution=h))
        _SECONDS[key] = time.perf_counter() - t0
    return _SOLVES[key]


def solve_seconds(name: str, h: float | None = None) -> float:
    """Wall time of the cached solve, so runtime budgets can charge it to each consumer."""
    solved(name, h)
    return _SECONDS[(name, h)]


@pytest.fixture(scope="session")
def pinch1d():
    rep = solved("pinch-1d")
    return rep, locate_last_contact(rep.field)


@pytest.fixture(scope="session")
def strip256():
    rep = solved("pinch-strip-2d")
    return rep, locate_last_contact(rep.field)


@pytest.fixture(scope="session")
def strip128():
    rep = solved("pinch-strip-2d", 1 / 128)
    return rep, locate_last_contact(rep.field)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
