"""Receding-horizon simulation loop.

Each period the engine observes the realized price row, re-forecasts the
remaining horizon, solves the configured policy over [today's prices;
forecast rows], executes only the first period of the returned plan at
today's actual prices, and rolls forward.  The naive policy short-circuits
this: one single-period solve on day 0, nothing afterwards.  The final
period performs no solve — it is the valuation row where the target is
verified and V_T recorded.

All book-keeping (holdings, cash, fees) is exact integer cents; solver
output only ever enters the books through a decoded, re-validated plan.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .colgen import (
    COLGEN_FALSE,
    COLGEN_TRUE,
    DIRECTION_BUY,
    DIRECTION_SELL,
    build_master,
    enumerate_patterns,
    prune_completed,
)
from .data_ingest import MarketHistory
from .domain import (
    InfeasibleTradeError,
    PortfolioState,
    TradePlan,
    TransitionInstance,
    apply_trades,
    portfolio_value,
    satisfies_target,
)
from .forecasting import (
    Forecast,
    ForecastConfig,
    InsufficientHistoryError,
    mape,
)
from .formulations import (
    POLICY_NAIVE,
    DirectionalPartition,
    PolicyConfig,
    TargetInfeasibleError,
    build_base,
    build_directional,
    build_naive,
    build_penalized,
    decode,
)
from .solver import SolveSettings, export_lp_text, solve

__all__ = [
    "SimulationConfig",
    "PeriodRecord",
    "SimulationResult",
    "STATUS_SUCCESS",
    "STATUS_INFEASIBLE",
    "STATUS_FORECAST_ERROR",
    "STATUS_SOLVER_ERROR",
    "run",
    "percent_change",
]

STATUS_SUCCESS = "success"
STATUS_INFEASIBLE = "infeasible"
STATUS_FORECAST_ERROR = "forecast-error"
STATUS_SOLVER_ERROR = "solver-error"

_COLGEN_KINDS = (COLGEN_TRUE, COLGEN_FALSE)


@dataclass(frozen=True, slots=True)
class SimulationConfig:
    """One policy run: what to solve each period and how to forecast.

    ``policy`` is a PolicyConfig for the compact models or one of the
    pattern-master variant names (``colgen_true`` / ``colgen_false``).
    ``horizon``, when given, must match the instance (guard against mixing
    configs across scenario sets).
    """

    policy: PolicyConfig | str
    forecaster: ForecastConfig = field(default_factory=ForecastConfig)
    horizon: int | None = None
    settings: SolveSettings = field(default_factory=SolveSettings)
    record_lp_exports: bool = False
    export_dir: str | None = None

    def __post_init__(self) -> None:
        if isinstance(self.policy, str) and self.policy not in _COLGEN_KINDS:
            raise ValueError(
                f"string policies must be one of {_COLGEN_KINDS}, got {self.policy!r}"
            )
        if self.record_lp_exports and not self.export_dir:
            raise ValueError("record_lp_exports requires an export_dir")

    @property
    def policy_name(self) -> str:
        return self.policy if isinstance(self.policy, str) else self.policy.kind


@dataclass(frozen=True, slots=True)
class PeriodRecord:
    """State observed and action taken in one simulated period (the terminal
    record is valuation-only: no trades, no solve)."""

    t: int
    prices: tuple[int, ...]
    holdings: tuple[int, ...]
    cash: int
    value: int
    buys: tuple[int, ...]
    sells: tuple[int, ...]
    flags: int
    fees_paid: int
    solver_status: str | None
    solve_seconds: float
    forecast_mape: float | None


@dataclass(frozen=True, slots=True)
class SimulationResult:
    scenario: str
    policy: str
    status: str
    records: tuple[PeriodRecord, ...]
    failure_period: int | None
    failure_reason: str | None
    initial_value: int
    terminal_value: int | None
    total_flags: int
    total_fees: int
    total_solve_seconds: float
    target_satisfied: bool
    mean_forecast_mape: float | None

    @property
    def succeeded(self) -> bool:
        return self.status == STATUS_SUCCESS


def _build_policy_model(policy, instance, path, state):
    """Build the configured model over the given price path and live state."""
    if isinstance(policy, str):
        horizon, n = path.shape[0] - 1, instance.n_assets
        every = range(n)
        buys = prune_completed(
            enumerate_patterns(every, horizon, n, DIRECTION_BUY), state, instance.target
        )
        sells = prune_completed(
            enumerate_patterns(every, horizon, n, DIRECTION_SELL), state, instance.target
        )
        return build_master(
            instance, path, state,
            buy_patterns=buys, sell_patterns=sells, variant=policy,
        )
    if policy.kind == POLICY_NAIVE:
        return build_naive(instance, state)
    if policy.kind == "base":
        return build_base(instance, path, state)
    if policy.kind == "directional":
        partition = DirectionalPartition.from_state(state, instance.target)
        return build_directional(instance, path, state, partition)
    if policy.kind == "penalized":
        partition = DirectionalPartition.from_state(state, instance.target)
        return build_penalized(instance, path, state, partition, policy.penalty)
    raise ValueError(f"unsupported policy kind {policy.kind!r}")


def run(
    instance: TransitionInstance,
    market: MarketHistory | None = None,
    config: SimulationConfig | None = None,
    *,
    start_index: int | None = None,
    shared_forecasts: dict[int, np.ndarray] | None = None,
    scenario_name: str = "",
) -> SimulationResult:
    """Simulate one scenario under one policy.

    ``market`` supplies the forecaster's lookback history; when omitted, the
    instance's own price window is all the forecaster sees (fine for the
    oracle and persistence methods on synthetic runs).  ``start_index``
    locates the instance window inside the market calendar and is inferred
    from the window's first date label when not given.  ``shared_forecasts``
    (period index -> forecast rows) lets a suite reuse one forecast set
    across policies; missing periods are computed locally.

    Failures (mid-run infeasibility, forecast errors, solver errors) end the
    simulation at the failing period with a recorded reason — the books are
    never silently patched.
    """
    if config is None:
        raise ValueError("a SimulationConfig is required")
    if config.horizon is not None and config.horizon != instance.horizon:
        raise ValueError(
            f"config horizon {config.horizon} does not match instance horizon {instance.horizon}"
        )
    horizon = instance.horizon
    window = np.asarray(instance.prices.values)[: horizon + 1]

    if market is not None:
        if start_index is None:
            first_label = instance.prices.period_labels[0]
            try:
                start_index = market.dates.index(first_label)
            except ValueError:
                raise ValueError(
                    f"instance start date {first_label!r} not found in market calendar"
                ) from None
        cols = [market.prices.universe.index_of(s) for s in instance.universe.symbols]
        panel = np.asarray(market.prices.values)[:, cols]
        realized = panel[start_index : start_index + horizon + 1]
        if not np.array_equal(realized, window):
            raise ValueError(
                "instance price window disagrees with the market history slice"
            )
    else:
        start_index = 0
        panel = window

    policy = config.policy
    is_naive = isinstance(policy, PolicyConfig) and policy.kind == POLICY_NAIVE
    state = instance.initial
    records: list[PeriodRecord] = []
    mapes: list[float] = []
    total_flags = 0
    total_fees = 0
    total_solve = 0.0
    failure: tuple[int, str, str] | None = None  # (period, status, reason)

    for t in range(horizon):
        row = window[t]
        value = portfolio_value(state, row)
        plan: TradePlan | None = None
        solver_status: str | None = None
        solve_seconds = 0.0
        step_mape: float | None = None

        wants_solve = (t == 0) if is_naive else True
        if wants_solve:
            remaining = horizon - t
            try:
                if is_naive:
                    path = np.vstack([row, row]).astype(np.float64)
                else:
                    if shared_forecasts is not None and t in shared_forecasts:
                        predicted = np.asarray(shared_forecasts[t], dtype=np.float64)
                        if predicted.shape != (remaining, instance.n_assets):
                            raise ValueError(
                                f"shared forecast for period {t} has shape {predicted.shape}, "
                                f"expected {(remaining, instance.n_assets)}"
                            )
                    else:
                        fc = forecast_for_period(
                            panel, start_index + t, config.forecaster, remaining
                        )
                        predicted = fc.values
                    step_mape = mape(predicted, window[t + 1 : t + 1 + remaining])
                    mapes.append(step_mape)
                    path = np.vstack([row.astype(np.float64), predicted])
            except InsufficientHistoryError as exc:
                failure = (t, STATUS_FORECAST_ERROR, str(exc))
            if failure is None:
                model = _build_policy_model(policy, instance, path, state)
                if config.record_lp_exports:
                    os.makedirs(config.export_dir, exist_ok=True)
                    name = f"{scenario_name or 'run'}_{config.policy_name}_t{t}.lp"
                    with open(os.path.join(config.export_dir, name), "w") as fh:
                        fh.write(export_lp_text(model))
                tic = time.perf_counter()
                outcome = solve(model, config.settings)
                solve_seconds = time.perf_counter() - tic
                total_solve += solve_seconds
                solver_status = outcome.status
                if outcome.status == "infeasible":
                    failure = (
                        t,
                        STATUS_INFEASIBLE,
                        "no feasible plan reaches the target from the live state",
                    )
                elif not outcome.has_solution:
                    failure = (t, STATUS_SOLVER_ERROR, outcome.message or outcome.status)
                else:
                    plan = decode(outcome, path.shape[0] - 1, instance.n_assets)

        if failure is not None:
            records.append(
                PeriodRecord(
                    t=t,
                    prices=tuple(int(x) for x in row),
                    holdings=tuple(int(x) for x in state.holdings),
                    cash=state.cash,
                    value=value,
                    buys=(0,) * instance.n_assets,
                    sells=(0,) * instance.n_assets,
                    flags=0,
                    fees_paid=0,
                    solver_status=solver_status,
                    solve_seconds=solve_seconds,
                    forecast_mape=step_mape,
                )
            )
            break

        if plan is not None:
            first = plan.row(0)
            try:
                new_state = apply_trades(state, first, row, instance.fee)
            except InfeasibleTradeError as exc:
                failure = (t, STATUS_INFEASIBLE, str(exc))
                records.append(
                    PeriodRecord(
                        t=t,
                        prices=tuple(int(x) for x in row),
                        holdings=tuple(int(x) for x in state.holdings),
                        cash=state.cash,
                        value=value,
                        buys=(0,) * instance.n_assets,
                        sells=(0,) * instance.n_assets,
                        flags=0,
                        fees_paid=0,
                        solver_status=solver_status,
                        solve_seconds=solve_seconds,
                        forecast_mape=step_mape,
                    )
                )
                break
            flags = first.flag_count
            fees = instance.fee * flags
            records.append(
                PeriodRecord(
                    t=t,
                    prices=tuple(int(x) for x in row),
                    holdings=tuple(int(x) for x in state.holdings),
                    cash=state.cash,
                    value=value,
                    buys=tuple(int(x) for x in first.buys),
                    sells=tuple(int(x) for x in first.sells),
                    flags=flags,
                    fees_paid=fees,
                    solver_status=solver_status,
                    solve_seconds=solve_seconds,
                    forecast_mape=step_mape,
                )
            )
            total_flags += flags
            total_fees += fees
            state = new_state
        else:  # settled naive periods: hold position, no solve
            records.append(
                PeriodRecord(
                    t=t,
                    prices=tuple(int(x) for x in row),
                    holdings=tuple(int(x) for x in state.holdings),
                    cash=state.cash,
                    value=value,
                    buys=(0,) * instance.n_assets,
                    sells=(0,) * instance.n_assets,
                    flags=0,
                    fees_paid=0,
                    solver_status=None,
                    solve_seconds=0.0,
                    forecast_mape=None,
                )
            )

    terminal_value: int | None = None
    target_ok = False
    if failure is None:
        final_row = window[horizon]
        terminal_value = portfolio_value(state, final_row)
        target_ok = satisfies_target(state, instance.target)
        records.append(
            PeriodRecord(
                t=horizon,
                prices=tuple(int(x) for x in final_row),
                holdings=tuple(int(x) for x in state.holdings),
                cash=state.cash,
                value=terminal_value,
                buys=(0,) * instance.n_assets,
                sells=(0,) * instance.n_assets,
                flags=0,
                fees_paid=0,
                solver_status=None,
                solve_seconds=0.0,
                forecast_mape=None,
            )
        )
        status = STATUS_SUCCESS if target_ok else STATUS_INFEASIBLE
        reason = None if target_ok else "final holdings do not meet the target"
        period = None if target_ok else horizon
    else:
        period, status, reason = failure

    return SimulationResult(
        scenario=scenario_name,
        policy=config.policy_name,
        status=status,
        records=tuple(records),
        failure_period=period,
        failure_reason=reason,
        initial_value=records[0].value if records else instance.initial_value(),
        terminal_value=terminal_value,
        total_flags=total_flags,
        total_fees=total_fees,
        total_solve_seconds=total_solve,
        target_satisfied=target_ok,
        mean_forecast_mape=float(np.mean(mapes)) if mapes else None,
    )


def forecast_for_period(panel, t_index: int, forecaster: ForecastConfig, horizon: int) -> Forecast:
    """Forecast the next ``horizon`` rows from the panel at ``t_index``,
    overriding the config's own horizon field."""
    from .forecasting import forecast as _forecast

    return _forecast(panel, t_index, replace(forecaster, horizon=horizon))


def percent_change(result: SimulationResult) -> float:
    """100 * (V_T - V_0) / V_0 for a completed run."""
    if result.terminal_value is None:
        raise ValueError("simulation did not complete; no terminal value")
    if result.initial_value <= 0:
        raise ValueError("initial value must be positive")
    return 100.0 * (result.terminal_value - result.initial_value) / result.initial_value
