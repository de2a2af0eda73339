import numpy as np
import pytest

from changeover.domain import (
    AssetUniverse,
    PortfolioState,
    PriceMatrix,
    TargetPortfolio,
    TransitionInstance,
)


def make_instance(
    price_path,
    holdings,
    cash,
    target,
    fee=0,
    symbols=None,
):
    """Assemble a TransitionInstance from plain lists (prices in cents)."""
    path = np.asarray(price_path, dtype=np.int64)
    n = path.shape[1]
    universe = AssetUniverse(symbols=symbols or tuple(f"A{i}" for i in range(n)))
    return TransitionInstance(
        universe=universe,
        initial=PortfolioState(holdings=np.asarray(holdings, dtype=np.int64), cash=int(cash)),
        target=TargetPortfolio(min_shares=np.asarray(target, dtype=np.int64)),
        horizon=path.shape[0] - 1,
        fee=int(fee),
        prices=PriceMatrix(
            universe=universe,
            values=path,
            period_labels=tuple(f"{h:03d}" for h in range(path.shape[0])),
        ),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


# Acceptance-checklist lines collected by tests/test_acceptance.py; replayed
# after the test summary so the checklist is visible without -s.
_ACCEPTANCE_LINES: list[str] = []


def record_acceptance_line(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance checklist")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
