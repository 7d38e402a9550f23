"""Acceptance battery: criteria 1-10 at their stated tolerances, then a
same-seed replay of all of them (criterion 11).

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.
"""

import time

import pytest

from corrkit.acceptance import CRITERIA, criterion_11, run_criterion
from corrkit.io import dumps

import conftest

SEED = 0
_cache = {}


def result(n):
    if n not in _cache:
        _cache[n] = run_criterion(n, SEED)
    return _cache[n]


def report(res):
    line = res.line()
    print(line)
    print(dumps(res.metrics))
    conftest.ACCEPTANCE_LINES.append(line)


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    res = result(n)
    report(res)
    failed = [k for k, ok in res.metrics["checks"].items() if not ok]
    assert res.passed, f"criterion {n} failed checks: {failed}"


@pytest.mark.slow
def test_criterion_11_replay_is_byte_identical():
    first = {n: result(n) for n in sorted(CRITERIA)}
    t0 = time.perf_counter()
    res = criterion_11(SEED, first)
    res.seconds = time.perf_counter() - t0
    report(res)
    assert res.passed, f"replay mismatched criteria: {res.metrics['mismatched']}"
