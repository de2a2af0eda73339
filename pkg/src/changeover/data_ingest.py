"""Price history loading and randomized scenario generation.

A history is a dated panel of adjusted close prices (stored in integer
cents).  Scenarios are drawn from a history with documented distributions:
pick a start date with enough lookback and horizon coverage, draw budgets
and a fee, then build the initial and target portfolios by adding one
uniformly-drawn affordable share at a time until nothing fits.  Every draw
is a pure function of (history, parameters, seed), and the scenario file
stores the realized vectors so experiments replay bit-identically.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .domain import (
    AssetUniverse,
    Cents,
    PortfolioState,
    PriceMatrix,
    TargetPortfolio,
    TransitionInstance,
)

__all__ = [
    "MarketHistory",
    "ScenarioSpec",
    "GenerationParams",
    "HistoryWindowError",
    "load_prices",
    "save_prices",
    "synthetic_history",
    "generate_scenario",
    "instance_from_spec",
    "save_scenarios",
    "load_scenarios",
]

_MAX_FFILL_RUN = 3


class HistoryWindowError(ValueError):
    """The history cannot cover the requested lookback + horizon window."""


@dataclass(frozen=True, slots=True)
class MarketHistory:
    """Full available price panel (integer cents) with its trading calendar;
    optional covariate series share the same calendar."""

    prices: PriceMatrix
    covariates: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != self.prices.n_periods:
                raise ValueError("covariates must share the price calendar")
            if not np.all(np.isfinite(cov)):
                raise ValueError("covariates must be finite")
            cov.setflags(write=False)
            object.__setattr__(self, "covariates", cov)

    @property
    def n_periods(self) -> int:
        return self.prices.n_periods

    @property
    def n_assets(self) -> int:
        return self.prices.n_assets

    @property
    def dates(self) -> tuple[str, ...]:
        return self.prices.period_labels


@dataclass(frozen=True, slots=True)
class ScenarioSpec:
    """Everything needed to replay one scenario exactly: the drawn knobs plus
    the realized initial/target share vectors and leftover cash."""

    name: str
    symbols: tuple[str, ...]
    start_index: int
    start_date: str
    horizon: int
    fee: Cents
    initial_budget: Cents
    target_budget: Cents
    seed: int
    initial_holdings: tuple[int, ...]
    initial_cash: Cents
    target_shares: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.initial_budget <= 0 or self.target_budget <= 0:
            raise ValueError("budgets must be positive")
        if len(self.initial_holdings) != len(self.symbols) or len(self.target_shares) != len(
            self.symbols
        ):
            raise ValueError("holdings/target vectors must match the symbol list")


@dataclass(frozen=True, slots=True)
class GenerationParams:
    """Distribution knobs for scenario drawing (defaults follow the desk
    protocol: 20-50 assets, 30-day horizon, $2-$9 whole-dollar fees, budgets
    $15,000-$350,000)."""

    n_assets_range: tuple[int, int] = (20, 50)
    horizon: int = 30
    fee_choices: tuple[Cents, ...] = tuple(range(200, 901, 100))
    budget_range: tuple[Cents, Cents] = (1_500_000, 35_000_000)
    lookback: int = 48
    shared_budget: bool = False  # draw target budget == initial budget

    def __post_init__(self) -> None:
        lo, hi = self.n_assets_range
        if lo < 1 or hi < lo:
            raise ValueError("bad asset-count range")
        if self.horizon < 1 or self.lookback < 0:
            raise ValueError("horizon must be >= 1 and lookback >= 0")
        blo, bhi = self.budget_range
        if blo <= 0 or bhi < blo:
            raise ValueError("bad budget range")
        if not self.fee_choices or any(f < 0 for f in self.fee_choices):
            raise ValueError("fee choices must be non-negative")


def load_prices(path) -> MarketHistory:
    """Read a ``date,SYM1,SYM2,...`` CSV of decimal prices into a history.

    Rows are sorted by date (duplicates are an error).  Missing cells are
    forward-filled when the gap is at most three consecutive rows; assets
    with longer gaps — or with leading gaps, which have nothing to fill
    from — are dropped with a warning.  Prices convert to integer cents.
    """
    try:
        frame = pd.read_csv(path)
    except Exception as exc:
        raise ValueError(f"could not parse price file {path}: {exc}") from exc
    if frame.shape[1] < 2:
        raise ValueError("price file needs a date column plus at least one asset column")
    date_col = frame.columns[0]
    try:
        dates = pd.to_datetime(frame[date_col])
    except Exception as exc:
        raise ValueError(f"unparseable dates in column {date_col!r}: {exc}") from exc
    frame = frame.assign(**{date_col: dates}).sort_values(date_col)
    if frame[date_col].duplicated().any():
        raise ValueError("duplicate dates in price file")

    symbols: list[str] = []
    columns: list[np.ndarray] = []
    dropped: list[str] = []
    for sym in frame.columns[1:]:
        series = pd.to_numeric(frame[sym], errors="coerce")
        gaps = series.isna()
        run = gaps.groupby((~gaps).cumsum()).cumsum().max() if gaps.any() else 0
        if gaps.iloc[0] or run > _MAX_FFILL_RUN:
            dropped.append(str(sym))
            continue
        series = series.ffill()
        if (series <= 0).any():
            raise ValueError(f"non-positive price in column {sym!r}")
        symbols.append(str(sym))
        columns.append(np.round(series.to_numpy() * 100).astype(np.int64))
    if dropped:
        warnings.warn(
            f"dropped {len(dropped)} asset(s) with gaps longer than {_MAX_FFILL_RUN} rows "
            f"or leading gaps: {', '.join(sorted(dropped))}",
            stacklevel=2,
        )
    if not symbols:
        raise ValueError("no usable asset columns remain after gap filtering")

    universe = AssetUniverse(symbols=tuple(symbols))
    labels = tuple(d.date().isoformat() for d in frame[date_col])
    values = np.column_stack(columns)
    return MarketHistory(
        prices=PriceMatrix(universe=universe, values=values, period_labels=labels)
    )


def save_prices(history: MarketHistory, path) -> None:
    """Write a history back to the ``date,SYM1,...`` CSV format (two-decimal
    dollars), the inverse of ``load_prices`` up to formatting."""
    values = np.asarray(history.prices.values) / 100.0
    frame = pd.DataFrame(values, columns=list(history.prices.universe.symbols))
    frame.insert(0, "date", list(history.dates))
    frame.to_csv(path, index=False, float_format="%.2f")


def synthetic_history(
    n_assets: int,
    n_periods: int,
    seed: int,
    *,
    start_range: tuple[Cents, Cents] = (2_000, 20_000),
    daily_move: float = 0.01,
    trend_range: tuple[float, float] = (-0.004, 0.004),
) -> MarketHistory:
    """Random-walk panel for demos and synthetic suites: each asset gets a
    per-day drift from ``trend_range`` plus uniform noise of ``daily_move``
    relative scale, floored at one dollar.  Deterministic in the seed."""
    if n_assets < 1 or n_periods < 2:
        raise ValueError("need at least one asset and two periods")
    rng = np.random.default_rng(seed)
    start = rng.integers(start_range[0], start_range[1] + 1, size=n_assets)
    trend = rng.uniform(trend_range[0], trend_range[1], size=n_assets)
    noise = rng.uniform(-daily_move, daily_move, size=(n_periods - 1, n_assets))
    steps = np.vstack([np.ones(n_assets), 1.0 + trend + noise]).cumprod(axis=0)
    values = np.maximum(np.round(start * steps), 100).astype(np.int64)
    universe = AssetUniverse(symbols=tuple(f"SYN{i:03d}" for i in range(n_assets)))
    base = pd.Timestamp("2020-01-01")
    labels = tuple((base + pd.Timedelta(days=i)).date().isoformat() for i in range(n_periods))
    return MarketHistory(
        prices=PriceMatrix(universe=universe, values=values, period_labels=labels)
    )


def _draw_portfolio(rng: np.random.Generator, prices_row: np.ndarray, budget: Cents):
    """Spend a budget one uniformly-drawn share at a time; unaffordable draws
    are skipped and the loop ends when no asset fits.  Returns (shares,
    leftover)."""
    n = prices_row.shape[0]
    shares = np.zeros(n, dtype=np.int64)
    remaining = int(budget)
    cheapest = int(prices_row.min())
    while remaining >= cheapest:
        a = int(rng.integers(0, n))
        price = int(prices_row[a])
        if price <= remaining:
            shares[a] += 1
            remaining -= price
    return shares, remaining


def generate_scenario(
    history: MarketHistory,
    params: GenerationParams,
    seed: int,
    *,
    name: str | None = None,
) -> tuple[ScenarioSpec, TransitionInstance]:
    """Draw one scenario from a history (pure in (history, params, seed)).

    The start index leaves ``lookback`` prior rows for forecasters and
    ``horizon`` rows ahead for the simulation.  The target is redrawn with a
    20%-reduced budget until its day-0 cost — plus fee headroom for every
    asset whose position must change — fits inside the initial portfolio
    value, so even the single-shot policy starts feasible.
    """
    rng = np.random.default_rng(seed)
    lo, hi = params.n_assets_range
    if history.n_assets < lo:
        raise ValueError(
            f"history has {history.n_assets} assets, fewer than the minimum {lo}"
        )
    n = int(rng.integers(lo, min(hi, history.n_assets) + 1))
    chosen = np.sort(rng.choice(history.n_assets, size=n, replace=False))

    first_valid = params.lookback
    last_valid = history.n_periods - params.horizon - 1
    if last_valid < first_valid:
        raise HistoryWindowError(
            f"history of {history.n_periods} rows cannot fit lookback {params.lookback} "
            f"+ horizon {params.horizon}"
        )
    start = int(rng.integers(first_valid, last_valid + 1))
    fee = int(rng.choice(np.asarray(params.fee_choices)))
    blo, bhi = params.budget_range
    initial_budget = int(rng.integers(blo, bhi + 1))
    target_budget = initial_budget if params.shared_budget else int(rng.integers(blo, bhi + 1))

    row0 = np.asarray(history.prices.values)[start, chosen]
    holdings, cash = _draw_portfolio(rng, row0, initial_budget)
    wealth = int(row0 @ holdings) + cash

    budget = target_budget
    for _ in range(200):
        target, _ = _draw_portfolio(rng, row0, budget)
        moves = int(np.count_nonzero(target != holdings))
        if int(row0 @ target) + fee * moves <= wealth:
            break
        budget = max(int(budget * 0.8), int(row0.min()))
    else:  # pragma: no cover - budget shrinks geometrically, so this terminates
        target = np.zeros(n, dtype=np.int64)

    symbols = tuple(history.prices.universe.symbols[i] for i in chosen)
    spec = ScenarioSpec(
        name=name or f"scenario-{seed}",
        symbols=symbols,
        start_index=start,
        start_date=history.dates[start],
        horizon=params.horizon,
        fee=fee,
        initial_budget=initial_budget,
        target_budget=target_budget,
        seed=seed,
        initial_holdings=tuple(int(x) for x in holdings),
        initial_cash=cash,
        target_shares=tuple(int(x) for x in target),
    )
    return spec, instance_from_spec(spec, history)


def instance_from_spec(spec: ScenarioSpec, history: MarketHistory) -> TransitionInstance:
    """Rebuild the exact transition instance a spec describes, slicing the
    realized (horizon+1)-row price window out of the history."""
    all_symbols = history.prices.universe.symbols
    try:
        cols = np.array([all_symbols.index(s) for s in spec.symbols])
    except ValueError as exc:
        raise ValueError(f"scenario symbols missing from history: {exc}") from exc
    stop = spec.start_index + spec.horizon + 1
    if spec.start_index < 0 or stop > history.n_periods:
        raise HistoryWindowError(
            f"scenario window [{spec.start_index}, {stop}) outside history"
        )
    values = np.asarray(history.prices.values)[spec.start_index : stop][:, cols]
    universe = AssetUniverse(symbols=spec.symbols)
    window = PriceMatrix(
        universe=universe,
        values=values,
        period_labels=history.dates[spec.start_index : stop],
    )
    return TransitionInstance(
        universe=universe,
        initial=PortfolioState(
            holdings=np.asarray(spec.initial_holdings), cash=spec.initial_cash
        ),
        target=TargetPortfolio(min_shares=np.asarray(spec.target_shares)),
        horizon=spec.horizon,
        fee=spec.fee,
        prices=window,
    )


def save_scenarios(path, specs: list[ScenarioSpec]) -> None:
    """One JSON object per line, keys sorted, so files diff cleanly."""
    with open(path, "w", encoding="utf-8") as fh:
        for spec in specs:
            record = {
                "name": spec.name,
                "symbols": list(spec.symbols),
                "start_index": spec.start_index,
                "start_date": spec.start_date,
                "horizon": spec.horizon,
                "fee": spec.fee,
                "initial_budget": spec.initial_budget,
                "target_budget": spec.target_budget,
                "seed": spec.seed,
                "initial_holdings": list(spec.initial_holdings),
                "initial_cash": spec.initial_cash,
                "target_shares": list(spec.target_shares),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_scenarios(path) -> list[ScenarioSpec]:
    specs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad scenario record: {exc}") from exc
            specs.append(
                ScenarioSpec(
                    name=record["name"],
                    symbols=tuple(record["symbols"]),
                    start_index=record["start_index"],
                    start_date=record["start_date"],
                    horizon=record["horizon"],
                    fee=record["fee"],
                    initial_budget=record["initial_budget"],
                    target_budget=record["target_budget"],
                    seed=record["seed"],
                    initial_holdings=tuple(record["initial_holdings"]),
                    initial_cash=record["initial_cash"],
                    target_shares=tuple(record["target_shares"]),
                )
            )
    return specs
