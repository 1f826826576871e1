import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE_LINES = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((number, passed, detail))


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


_SOLVES = {}


def cached_solve(epsilon, omega, seeds=(), s=2, lam=1.0):
    """Default-grid GP solve shared across test modules (solves at small eps take seconds)."""
    from becvortex import gp
    from becvortex.ladder import ScalingContext
    from becvortex.trap import TrapParams

    key = (epsilon, omega, tuple(seeds), s, lam)
    if key not in _SOLVES:
        ctx = ScalingContext(epsilon, TrapParams(s, lam))
        _SOLVES[key] = gp.solve(gp.default_grid_spec(ctx), ctx, omega, seeds=list(seeds))
    return _SOLVES[key]
