"""Core value objects and exact-arithmetic accounting for portfolio changeover.

All money is carried as integer cents (type alias ``Cents``).  Cash may never
go negative (no leverage) and holdings may never go negative (no short
selling); those two boundaries are feasibility constraints, so every
accounting operation in this module is exact integer arithmetic — floats
never touch the books.  Realized price rows are integer cents; forecast
price rows may be fractional (they only parameterize models, never ledgers).

Every type here is an immutable value object: numpy arrays are copied in and
marked read-only, so instances are safe to share across threads/processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Cents",
    "AffordabilityError",
    "DimensionMismatchError",
    "InfeasibleTradeError",
    "AssetUniverse",
    "PriceMatrix",
    "PortfolioState",
    "TargetPortfolio",
    "TransitionInstance",
    "TradePlan",
    "TradeRow",
    "portfolio_value",
    "apply_trades",
    "satisfies_target",
]

Cents = int


class DimensionMismatchError(ValueError):
    """Vector/matrix shapes disagree with the asset universe or each other."""


class InfeasibleTradeError(ValueError):
    """A trade would violate a hard feasibility boundary (no-short / no-leverage)."""


class AffordabilityError(ValueError):
    """Target portfolio is not affordable from current wealth at current prices."""


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _as_int_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if np.issubdtype(arr.dtype, np.floating):
        if not np.all(arr == np.round(arr)):
            raise ValueError(f"{name} must be integer-valued")
    return _readonly(arr, np.int64)


@dataclass(frozen=True, slots=True)
class AssetUniverse:
    """Ordered, immutable set of asset symbols; index order is identity."""

    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        if len(self.symbols) == 0:
            raise ValueError("universe must contain at least one asset")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("universe symbols must be unique")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index_of(self, symbol: str) -> int:
        return self.symbols.index(symbol)


@dataclass(frozen=True, slots=True)
class PriceMatrix:
    """Strictly positive per-share prices in cents, one row per period.

    ``values`` is (periods x assets).  Realized histories are integer cents;
    forecast rows may be float cents.  ``period_labels`` are strictly
    increasing business-day identifiers (ISO dates for real data).
    """

    universe: AssetUniverse
    values: np.ndarray
    period_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"price matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("price matrix needs at least one period row")
        if arr.shape[1] != self.universe.size:
            raise DimensionMismatchError(
                f"price matrix has {arr.shape[1]} columns for {self.universe.size} assets"
            )
        if not np.all(np.isfinite(arr.astype(np.float64))):
            raise ValueError("prices must be finite")
        if not np.all(arr > 0):
            raise ValueError("all prices must be strictly positive")
        dtype = np.int64 if np.issubdtype(arr.dtype, np.integer) else np.float64
        object.__setattr__(self, "values", _readonly(arr, dtype))
        labels = tuple(str(p) for p in self.period_labels)
        if len(labels) != arr.shape[0]:
            raise DimensionMismatchError(
                f"{len(labels)} period labels for {arr.shape[0]} price rows"
            )
        if any(a >= b for a, b in zip(labels, labels[1:])):
            raise ValueError("period labels must be strictly increasing")
        object.__setattr__(self, "period_labels", labels)

    @property
    def n_periods(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_assets(self) -> int:
        return int(self.values.shape[1])

    @property
    def is_integral(self) -> bool:
        return bool(np.issubdtype(self.values.dtype, np.integer))

    def row(self, period: int) -> np.ndarray:
        return self.values[period]


@dataclass(frozen=True, slots=True)
class PortfolioState:
    """Whole-share holdings plus cash, both non-negative.  Cash in cents."""

    holdings: np.ndarray
    cash: Cents

    def __post_init__(self) -> None:
        arr = _as_int_vector(self.holdings, "holdings")
        if np.any(arr < 0):
            raise InfeasibleTradeError("holdings must be non-negative (no short selling)")
        object.__setattr__(self, "holdings", arr)
        cash = self.cash
        if isinstance(cash, float):
            if cash != int(cash):
                raise ValueError("cash must be an integer number of cents")
            cash = int(cash)
        cash = int(cash)
        if cash < 0:
            raise InfeasibleTradeError("cash must be non-negative (no leverage)")
        object.__setattr__(self, "cash", cash)

    @property
    def n_assets(self) -> int:
        return int(self.holdings.shape[0])


@dataclass(frozen=True, slots=True)
class TargetPortfolio:
    """Elementwise minimum share counts the final holdings must reach."""

    min_shares: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_int_vector(self.min_shares, "target min_shares")
        if np.any(arr < 0):
            raise ValueError("target share counts must be non-negative")
        object.__setattr__(self, "min_shares", arr)

    @property
    def n_assets(self) -> int:
        return int(self.min_shares.shape[0])


@dataclass(frozen=True, slots=True)
class TradeRow:
    """One period's trades: buy/sell quantities plus executed-action flags.

    A flag marks a fee-charging action; quantity > 0 requires its flag, and an
    asset is never flagged for buy and sell in the same period.
    """

    buys: np.ndarray
    sells: np.ndarray
    buy_flags: np.ndarray
    sell_flags: np.ndarray

    def __post_init__(self) -> None:
        buys = _as_int_vector(self.buys, "buys")
        sells = _as_int_vector(self.sells, "sells")
        bf = _as_int_vector(self.buy_flags, "buy_flags")
        sf = _as_int_vector(self.sell_flags, "sell_flags")
        n = buys.shape[0]
        if any(v.shape[0] != n for v in (sells, bf, sf)):
            raise DimensionMismatchError("trade row vectors must share one length")
        if np.any(buys < 0) or np.any(sells < 0):
            raise ValueError("trade quantities must be non-negative")
        if not (set(np.unique(bf)) <= {0, 1} and set(np.unique(sf)) <= {0, 1}):
            raise ValueError("trade flags must be binary")
        if np.any((buys > 0) & (bf == 0)) or np.any((sells > 0) & (sf == 0)):
            raise ValueError("non-zero trade quantity without its executed flag")
        if np.any(bf + sf > 1):
            raise ValueError("an asset cannot be flagged for buy and sell in one period")
        for name, v in (("buys", buys), ("sells", sells), ("buy_flags", bf), ("sell_flags", sf)):
            object.__setattr__(self, name, v)

    @property
    def flag_count(self) -> int:
        return int(self.buy_flags.sum() + self.sell_flags.sum())

    @property
    def is_empty(self) -> bool:
        return self.flag_count == 0 and not (self.buys.any() or self.sells.any())


@dataclass(frozen=True, slots=True)
class TradePlan:
    """Whole-horizon schedule of trades, one ``TradeRow`` worth per period."""

    buys: np.ndarray
    sells: np.ndarray
    buy_flags: np.ndarray
    sell_flags: np.ndarray

    def __post_init__(self) -> None:
        mats = {}
        for name in ("buys", "sells", "buy_flags", "sell_flags"):
            arr = np.asarray(getattr(self, name))
            if arr.ndim != 2:
                raise DimensionMismatchError(f"{name} must be 2-D (periods x assets)")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise ValueError(f"{name} must be integer-valued")
            mats[name] = _readonly(arr, np.int64)
        shape = mats["buys"].shape
        if any(m.shape != shape for m in mats.values()):
            raise DimensionMismatchError("plan matrices must share one shape")
        if np.any(mats["buys"] < 0) or np.any(mats["sells"] < 0):
            raise ValueError("trade quantities must be non-negative")
        for name in ("buy_flags", "sell_flags"):
            if not set(np.unique(mats[name])) <= {0, 1}:
                raise ValueError(f"{name} must be binary")
        if np.any((mats["buys"] > 0) & (mats["buy_flags"] == 0)):
            raise ValueError("buy quantity without its executed flag")
        if np.any((mats["sells"] > 0) & (mats["sell_flags"] == 0)):
            raise ValueError("sell quantity without its executed flag")
        if np.any(mats["buy_flags"] + mats["sell_flags"] > 1):
            raise ValueError("an asset cannot be flagged for buy and sell in one period")
        for name, m in mats.items():
            object.__setattr__(self, name, m)

    @classmethod
    def empty(cls, n_periods: int, n_assets: int) -> "TradePlan":
        zero = np.zeros((n_periods, n_assets), dtype=np.int64)
        return cls(zero, zero, zero, zero)

    @property
    def n_periods(self) -> int:
        return int(self.buys.shape[0])

    @property
    def n_assets(self) -> int:
        return int(self.buys.shape[1])

    @property
    def flag_count(self) -> int:
        return int(self.buy_flags.sum() + self.sell_flags.sum())

    def row(self, period: int) -> TradeRow:
        return TradeRow(
            self.buys[period],
            self.sells[period],
            self.buy_flags[period],
            self.sell_flags[period],
        )


@dataclass(frozen=True, slots=True)
class TransitionInstance:
    """One solvable changeover problem: where we are, where we must end up.

    ``prices`` row 0 is the current known price row; rows must cover the full
    horizon (``horizon + 1`` rows at least) and are integer cents (realized
    data).  Construction rejects targets whose market value exceeds current
    total wealth, since no policy could then satisfy the final-holdings
    constraint.
    """

    universe: AssetUniverse
    initial: PortfolioState
    target: TargetPortfolio
    horizon: int
    fee: Cents
    prices: PriceMatrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "fee", int(self.fee))
        if self.horizon < 1:
            raise ValueError("horizon must be at least one period")
        if self.fee < 0:
            raise ValueError("fee must be non-negative")
        n = self.universe.size
        if self.initial.n_assets != n or self.target.n_assets != n:
            raise DimensionMismatchError("portfolio/target length must match universe size")
        if self.prices.universe.symbols != self.universe.symbols:
            raise DimensionMismatchError("price matrix universe must match instance universe")
        if self.prices.n_periods < self.horizon + 1:
            raise ValueError(
                f"need at least {self.horizon + 1} price rows for horizon "
                f"{self.horizon}, got {self.prices.n_periods}"
            )
        if not self.prices.is_integral:
            raise ValueError("instance prices must be integer cents (realized data)")
        target_cost = int(self.prices.row(0) @ self.target.min_shares)
        wealth = portfolio_value(self.initial, self.prices.row(0))
        if target_cost > wealth:
            raise AffordabilityError(
                f"target market value {target_cost} cents exceeds current wealth "
                f"{wealth} cents at current prices"
            )

    @property
    def n_assets(self) -> int:
        return self.universe.size

    def initial_value(self) -> Cents:
        return portfolio_value(self.initial, self.prices.row(0))


def portfolio_value(state: PortfolioState, prices) -> Cents:
    """Total wealth: holdings valued at the given price row, plus cash."""
    row = np.asarray(prices)
    if row.ndim != 1 or row.shape[0] != state.n_assets:
        raise DimensionMismatchError(
            f"price row of length {row.shape} for {state.n_assets} holdings"
        )
    value = row @ state.holdings + state.cash
    if np.issubdtype(row.dtype, np.integer):
        return int(value)
    return float(value)


def apply_trades(state: PortfolioState, trades: TradeRow, prices, fee: Cents) -> PortfolioState:
    """Execute one period's trades at the given integer-cent prices.

    New holdings = holdings + buys - sells; new cash = cash - trade value -
    fee per executed flag.  All arithmetic exact.  Raises
    ``InfeasibleTradeError`` naming the violated boundary if the result would
    short-sell or need leverage.
    """
    row = np.asarray(prices)
    if row.ndim != 1 or row.shape[0] != state.n_assets:
        raise DimensionMismatchError(
            f"price row of shape {row.shape} for {state.n_assets} holdings"
        )
    if np.issubdtype(row.dtype, np.floating):
        if not np.all(row == np.round(row)):
            raise ValueError("execution prices must be integer cents")
        row = row.astype(np.int64)
    fee = int(fee)
    if fee < 0:
        raise ValueError("fee must be non-negative")

    holdings = state.holdings + trades.buys - trades.sells
    if np.any(holdings < 0):
        bad = state.holdings + trades.buys - trades.sells
        symbols = np.flatnonzero(bad < 0)
        raise InfeasibleTradeError(
            f"no-short violated: selling more than held for asset index(es) {symbols.tolist()}"
        )
    trade_value = int(row @ (trades.buys - trades.sells))
    cash = state.cash - trade_value - fee * trades.flag_count
    if cash < 0:
        raise InfeasibleTradeError(
            f"no-leverage violated: cash would be {cash} cents after trades and fees"
        )
    return PortfolioState(holdings=holdings, cash=cash)


def satisfies_target(state: PortfolioState, target: TargetPortfolio) -> bool:
    """True iff holdings meet the target minimum elementwise."""
    if state.n_assets != target.n_assets:
        raise DimensionMismatchError(
            f"{state.n_assets} holdings vs {target.n_assets} target entries"
        )
    return bool(np.all(state.holdings >= target.min_shares))
