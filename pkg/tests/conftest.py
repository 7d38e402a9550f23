import numpy as np
import pytest

from corrkit.market_data import ReturnPanel


def make_panel(R, period=60, start=0):
    R = np.asarray(R, dtype=float)
    T, N = R.shape
    ts = start + period * np.arange(1, T + 1)
    return ReturnPanel(ts, period, [f"A{j}" for j in range(N)], R)


def random_corr(rng, N, T=None):
    """Random full-rank correlation matrix from a Gaussian sample."""
    T = T or 3 * N
    X = rng.standard_normal((T, N)) @ rng.standard_normal((N, N))
    C = np.corrcoef(X, rowvar=False)
    return (C + C.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
