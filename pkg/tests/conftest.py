import functools
import time

import pytest

from chainquant import IterationConfig, Potential, initial_system, run_scheme

from _acceptance_log import RESULTS


@functools.lru_cache(maxsize=None)
def converged(degree: int, coeffs: tuple, sector: str, scheme="auto", k_max: int = 48):
    """Cached (system, report) for a potential; shared across test modules."""
    p = Potential(degree, coeffs)
    if isinstance(scheme, list):
        scheme = tuple(scheme)
    cfg = IterationConfig(scheme=list(scheme) if isinstance(scheme, tuple) else scheme, k_max=k_max)
    return run_scheme(initial_system(p, sector, k_max), cfg)


@pytest.fixture
def solve():
    return converged


SUITE_BUDGET = 900.0  # seconds for the whole run
_START = {}


def pytest_sessionstart(session):
    _START["t"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _START["t"]
    _START["elapsed"] = elapsed
    if RESULTS and elapsed > SUITE_BUDGET and exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    elapsed = _START.get("elapsed", time.perf_counter() - _START["t"])
    terminalreporter.section("acceptance criteria")
    for n in range(1, 10):
        ok, detail = RESULTS.get(n, (False, "not reached"))
        if n == 9:
            ok = ok and elapsed <= SUITE_BUDGET
            detail = f"{detail}; full run {elapsed:.0f}s (budget {SUITE_BUDGET:.0f}s)"
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
