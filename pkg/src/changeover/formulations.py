"""MILP builders for the changeover policies, plus plan decoding/evaluation.

Model layout shared by every policy
-----------------------------------
A solve at some step covers a *price path* of ``H + 1`` rows: rows
``0 .. H-1`` are trading days (row 0 is today's realized prices, later rows
are usually forecasts) and row ``H`` is the terminal valuation row.  Trades on
day ``h`` execute at row ``h`` prices and update holdings/cash within the same
period; the final post-trade holdings must meet the target and are valued at
the terminal row.  Variables per trading day ``h`` and asset ``a``:

* ``zp_h_a`` / ``zn_h_a`` — integer buy / sell quantities in ``[0, M_h]``
* ``wp_h_a`` / ``wn_h_a`` — binary executed-action flags (each costs a fee)
* ``hold_h_a`` / ``cash_h`` — continuous post-trade holdings and cash
  (integrality of holdings follows from integer quantities)

The objective is terminal wealth minus the explicit fee sum.  The fee is
deliberately charged twice — once inside the cash balance and once in the
objective — so trading is discouraged beyond its pure cash cost.  A tiny
tie-break (1e-7 of the fee per executed flag) is subtracted so that among
equal-value plans the solver prefers the one with fewest actions; it is far
below the cent quantum of the true objective, so it never changes which plans
are optimal, and reported objectives are always recomputed without it.

The *naive* policy is the same machinery on a degenerate path: a single
trading day valued at its own prices (everything must complete immediately).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    Cents,
    DimensionMismatchError,
    InfeasibleTradeError,
    PortfolioState,
    TargetPortfolio,
    TradePlan,
    TransitionInstance,
    portfolio_value,
)
from .solver import (
    BINARY,
    INTEGER,
    SENSE_EQ,
    SENSE_GE,
    SENSE_LE,
    MilpModel,
    SolveOutcome,
    SolveSettings,
    solve,
)

__all__ = [
    "POLICY_BASE",
    "POLICY_DIRECTIONAL",
    "POLICY_PENALIZED",
    "POLICY_NAIVE",
    "BigMSchedule",
    "DirectionalPartition",
    "PolicyConfig",
    "DecodeError",
    "TargetInfeasibleError",
    "compute_big_m",
    "build_base",
    "build_directional",
    "build_penalized",
    "build_naive",
    "decode",
    "replay_plan",
    "plan_objective",
    "wrong_direction_value",
    "solve_to_plan",
]

POLICY_BASE = "base"
POLICY_DIRECTIONAL = "directional"
POLICY_PENALIZED = "penalized"
POLICY_NAIVE = "naive"

_POLICY_KINDS = (POLICY_BASE, POLICY_DIRECTIONAL, POLICY_PENALIZED, POLICY_NAIVE)

_TIE_BREAK_SCALE = 1e-7
_DECODE_TOL = 1e-6


class DecodeError(RuntimeError):
    """Solver assignment could not be decoded into a valid trade plan."""


class TargetInfeasibleError(RuntimeError):
    """No feasible plan reaches the minimum target holdings from this state."""


@dataclass(frozen=True, slots=True)
class BigMSchedule:
    """Per-period wealth ceilings (``u``, cents) and share-count caps (``m``).

    Built from a perfect-trade argument: wealth can grow at most by the best
    single-asset return each period (floored at 1, since holding cash never
    loses), and no asset's tradable quantity can exceed that wealth divided by
    the cheapest price of the period.
    """

    u: np.ndarray
    m: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=np.float64)
        m = np.asarray(self.m, dtype=np.int64)
        if u.shape != m.shape or u.ndim != 1:
            raise DimensionMismatchError("u and m must be 1-D vectors of equal length")
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            raise ValueError("wealth ceilings must be finite and positive")
        if np.any(m < 1):
            raise ValueError("share caps must be at least 1")
        u.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "m", m)


@dataclass(frozen=True, slots=True)
class DirectionalPartition:
    """Index split by trade need: ``buy_set`` holds under-target assets,
    ``sell_set`` the rest.  Recomputed from live holdings every engine step."""

    buy_set: tuple[int, ...]
    sell_set: tuple[int, ...]

    def __post_init__(self) -> None:
        buys = tuple(int(a) for a in self.buy_set)
        sells = tuple(int(a) for a in self.sell_set)
        if set(buys) & set(sells):
            raise ValueError("buy and sell sets must be disjoint")
        object.__setattr__(self, "buy_set", buys)
        object.__setattr__(self, "sell_set", sells)

    @classmethod
    def from_state(cls, state: PortfolioState, target: TargetPortfolio) -> "DirectionalPartition":
        if state.n_assets != target.n_assets:
            raise DimensionMismatchError("holdings and target lengths differ")
        under = state.holdings < target.min_shares
        return cls(
            buy_set=tuple(int(a) for a in np.flatnonzero(under)),
            sell_set=tuple(int(a) for a in np.flatnonzero(~under)),
        )


@dataclass(frozen=True, slots=True)
class PolicyConfig:
    """Which compact policy to run; ``penalty`` is the wrong-direction trade
    penalty as a fraction of traded value (only meaningful for penalized)."""

    kind: str
    penalty: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")


def compute_big_m(price_path, current_value: Cents) -> BigMSchedule:
    """Wealth ceilings and share caps for each row of a price path.

    Row 0's ceiling is the current portfolio value; each later row multiplies
    by the best per-asset gross return of that step, floored at 1 (holding
    cash is always available, so wealth ceilings never shrink).  The share cap
    is the ceiling divided by the row's cheapest price, rounded up.
    """
    path = np.asarray(price_path, dtype=np.float64)
    if path.ndim != 2 or path.shape[0] < 1:
        raise DimensionMismatchError("price path must be a 2-D (periods x assets) matrix")
    if np.any(path <= 0) or not np.all(np.isfinite(path)):
        raise ValueError("price path entries must be positive and finite")
    if current_value <= 0:
        raise ValueError("current portfolio value must be positive")

    periods = path.shape[0]
    u = np.empty(periods)
    m = np.empty(periods, dtype=np.int64)
    u[0] = float(current_value)
    for h in range(1, periods):
        growth = np.max(path[h] / path[h - 1])
        u[h] = u[h - 1] * max(1.0, growth)
    for h in range(periods):
        ratio = u[h] / float(np.min(path[h]))
        nearest = round(ratio)
        cap = nearest if abs(ratio - nearest) <= 1e-9 else math.ceil(ratio)
        m[h] = max(1, int(cap))
    return BigMSchedule(u=u, m=m)


def _build_compact(
    instance: TransitionInstance,
    price_path: np.ndarray,
    state: PortfolioState,
    *,
    kind: str,
    partition: DirectionalPartition | None = None,
    penalty: float = 0.0,
) -> MilpModel:
    path = np.asarray(price_path, dtype=np.float64)
    if path.ndim != 2 or path.shape[1] != instance.n_assets:
        raise DimensionMismatchError("price path must be (periods x assets) for this instance")
    if path.shape[0] < 2:
        raise ValueError("price path needs at least one trading row and one valuation row")
    horizon = path.shape[0] - 1
    n = instance.n_assets
    fee = instance.fee
    value_now = portfolio_value(state, np.asarray(price_path)[0])
    schedule = compute_big_m(path[:horizon], value_now)

    model = MilpModel(name=f"changeover_{kind}")
    for h in range(horizon):
        cap = float(schedule.m[h])
        for a in range(n):
            model.add_variable(f"zp_{h}_{a}", INTEGER, 0.0, cap)
            model.add_variable(f"zn_{h}_{a}", INTEGER, 0.0, cap)
            model.add_variable(f"wp_{h}_{a}", BINARY)
            model.add_variable(f"wn_{h}_{a}", BINARY)
            model.add_variable(f"hold_{h}_{a}", lower=0.0, upper=None)
        model.add_variable(f"cash_{h}", lower=0.0, upper=None)

    for h in range(horizon):
        for a in range(n):
            # post-trade holdings balance
            coeffs = {f"hold_{h}_{a}": 1.0, f"zp_{h}_{a}": -1.0, f"zn_{h}_{a}": 1.0}
            rhs = 0.0
            if h == 0:
                rhs = float(state.holdings[a])
            else:
                coeffs[f"hold_{h - 1}_{a}"] = -1.0
            model.add_constraint(f"hold_bal_{h}_{a}", coeffs, SENSE_EQ, rhs)
            # fee-charging link: quantities need their flag
            model.add_constraint(
                f"link_buy_{h}_{a}",
                {f"zp_{h}_{a}": 1.0, f"wp_{h}_{a}": -float(schedule.m[h])},
                SENSE_LE,
                0.0,
            )
            model.add_constraint(
                f"link_sell_{h}_{a}",
                {f"zn_{h}_{a}": 1.0, f"wn_{h}_{a}": -float(schedule.m[h])},
                SENSE_LE,
                0.0,
            )
        # post-trade cash balance, fees charged per executed flag
        coeffs = {f"cash_{h}": 1.0}
        for a in range(n):
            coeffs[f"zp_{h}_{a}"] = float(path[h, a])
            coeffs[f"zn_{h}_{a}"] = -float(path[h, a])
            if fee:
                coeffs[f"wp_{h}_{a}"] = float(fee)
                coeffs[f"wn_{h}_{a}"] = float(fee)
        if h == 0:
            rhs = float(state.cash)
        else:
            coeffs[f"cash_{h - 1}"] = -1.0
            rhs = 0.0
        model.add_constraint(f"cash_bal_{h}", coeffs, SENSE_EQ, rhs)

    if kind in (POLICY_BASE, POLICY_PENALIZED):
        # an asset is never bought and sold in the same period (symmetry cut)
        for h in range(horizon):
            for a in range(n):
                model.add_constraint(
                    f"one_side_{h}_{a}",
                    {f"wp_{h}_{a}": 1.0, f"wn_{h}_{a}": 1.0},
                    SENSE_LE,
                    1.0,
                )

    if kind == POLICY_DIRECTIONAL:
        if partition is None:
            raise ValueError("directional policy requires a partition")
        for h in range(horizon):
            for a in partition.sell_set:
                model.add_constraint(
                    f"no_buy_{h}_{a}", {f"wp_{h}_{a}": 1.0}, SENSE_LE, 0.0
                )
            for a in partition.buy_set:
                model.add_constraint(
                    f"no_sell_{h}_{a}", {f"wn_{h}_{a}": 1.0}, SENSE_LE, 0.0
                )

    last = horizon - 1
    for a in range(n):
        model.add_constraint(
            f"target_{a}",
            {f"hold_{last}_{a}": 1.0},
            SENSE_GE,
            float(instance.target.min_shares[a]),
        )

    objective: dict[str, float] = {f"cash_{last}": 1.0}
    for a in range(n):
        objective[f"hold_{last}_{a}"] = float(path[horizon, a])
    if fee:
        per_flag = -float(fee) * (1.0 + _TIE_BREAK_SCALE)
        for h in range(horizon):
            for a in range(n):
                objective[f"wp_{h}_{a}"] = per_flag
                objective[f"wn_{h}_{a}"] = per_flag
    if kind == POLICY_PENALIZED and penalty > 0:
        if partition is None:
            raise ValueError("penalized policy requires a partition")
        for h in range(horizon):
            for a in partition.buy_set:  # selling an under-target asset is penalized
                objective[f"zn_{h}_{a}"] = objective.get(f"zn_{h}_{a}", 0.0) - penalty * float(
                    path[h, a]
                )
            for a in partition.sell_set:  # buying an at/over-target asset is penalized
                objective[f"zp_{h}_{a}"] = objective.get(f"zp_{h}_{a}", 0.0) - penalty * float(
                    path[h, a]
                )
    model.set_objective(objective, maximize=True)
    return model


def _default_path(instance: TransitionInstance) -> np.ndarray:
    return np.asarray(instance.prices.values[: instance.horizon + 1])


def build_base(
    instance: TransitionInstance,
    price_path=None,
    state: PortfolioState | None = None,
) -> MilpModel:
    """Unrestricted multi-period model: trade anything, meet the target at the end."""
    path = _default_path(instance) if price_path is None else np.asarray(price_path)
    state = instance.initial if state is None else state
    return _build_compact(instance, path, state, kind=POLICY_BASE)


def build_directional(
    instance: TransitionInstance,
    price_path=None,
    state: PortfolioState | None = None,
    partition: DirectionalPartition | None = None,
) -> MilpModel:
    """Base model restricted to target-approaching trades only (buys of
    under-target assets, sells of the rest); the one-side cut becomes
    redundant and is omitted."""
    path = _default_path(instance) if price_path is None else np.asarray(price_path)
    state = instance.initial if state is None else state
    if partition is None:
        partition = DirectionalPartition.from_state(state, instance.target)
    return _build_compact(instance, path, state, kind=POLICY_DIRECTIONAL, partition=partition)


def build_penalized(
    instance: TransitionInstance,
    price_path=None,
    state: PortfolioState | None = None,
    partition: DirectionalPartition | None = None,
    penalty: float = 0.0,
) -> MilpModel:
    """Base model whose objective docks ``penalty`` times the traded value of
    every wrong-direction trade (sells of under-target assets, buys of the
    rest).  ``penalty=0`` is exactly the base model."""
    path = _default_path(instance) if price_path is None else np.asarray(price_path)
    state = instance.initial if state is None else state
    if partition is None:
        partition = DirectionalPartition.from_state(state, instance.target)
    return _build_compact(
        instance, path, state, kind=POLICY_PENALIZED, partition=partition, penalty=penalty
    )


def build_naive(
    instance: TransitionInstance,
    state: PortfolioState | None = None,
) -> MilpModel:
    """Single-shot baseline: all trading on day 0 at day-0 prices, valued at
    day-0 prices.  Built as the compact model on the degenerate two-row path
    ``[Y_0, Y_0]``; the one-side cut is omitted here."""
    state = instance.initial if state is None else state
    row = np.asarray(instance.prices.row(0))
    path = np.vstack([row, row])
    return _build_compact(instance, path, state, kind=POLICY_NAIVE)


def decode(outcome: SolveOutcome, n_periods: int, n_assets: int) -> TradePlan:
    """Turn a solver assignment into an exact ``TradePlan``.

    Quantities round to the nearest integer (anything further than 1e-6 away
    signals a solver-tolerance bug and raises ``DecodeError``).  Each cell is
    then canonicalized: buy and sell quantities net against each other and
    flags with zero quantity are cleared, so decoded plans never pay a fee
    for a no-op.  Netting can only arise in zero-fee ties, where it is
    value-neutral; it never loses cash and never adds fees.
    """
    if not outcome.has_solution:
        raise ValueError(f"cannot decode a solve outcome with status {outcome.status!r}")

    def _int_value(name: str) -> int:
        raw = outcome.assignment.get(name, 0.0)
        rounded = round(raw)
        if abs(raw - rounded) > _DECODE_TOL:
            raise DecodeError(f"{name}={raw} is not integral within {_DECODE_TOL}")
        return int(rounded)

    buys = np.zeros((n_periods, n_assets), dtype=np.int64)
    sells = np.zeros((n_periods, n_assets), dtype=np.int64)
    buy_flags = np.zeros((n_periods, n_assets), dtype=np.int64)
    sell_flags = np.zeros((n_periods, n_assets), dtype=np.int64)
    for h in range(n_periods):
        for a in range(n_assets):
            net = _int_value(f"zp_{h}_{a}") - _int_value(f"zn_{h}_{a}")
            if net > 0:
                buys[h, a] = net
                buy_flags[h, a] = 1
            elif net < 0:
                sells[h, a] = -net
                sell_flags[h, a] = 1
    try:
        return TradePlan(buys=buys, sells=sells, buy_flags=buy_flags, sell_flags=sell_flags)
    except ValueError as exc:  # pragma: no cover - canonical form should always validate
        raise DecodeError(f"decoded plan violates plan invariants: {exc}") from exc


def replay_plan(
    price_path,
    holdings,
    cash: Cents,
    fee: Cents,
    plan: TradePlan,
) -> tuple[np.ndarray, Cents, int]:
    """Walk a plan through exact integer accounting.

    Returns (final holdings, final cash, total executed flags).  Raises
    ``InfeasibleTradeError`` if any period would short-sell or go cash
    negative.  The price path must be integer cents and have one more row
    than the plan (the terminal valuation row is unused here).
    """
    path = np.asarray(price_path)
    if np.issubdtype(path.dtype, np.floating):
        if not np.all(path == np.round(path)):
            raise ValueError("replay requires integer-cent prices")
        path = path.astype(np.int64)
    if path.shape[0] < plan.n_periods:
        raise DimensionMismatchError("price path shorter than the plan")
    position = np.array(holdings, dtype=np.int64)
    balance = int(cash)
    flags = 0
    for h in range(plan.n_periods):
        net = plan.buys[h] - plan.sells[h]
        position = position + net
        if np.any(position < 0):
            raise InfeasibleTradeError(f"plan short-sells at period {h}")
        row_flags = int(plan.buy_flags[h].sum() + plan.sell_flags[h].sum())
        balance = balance - int(path[h] @ net) - int(fee) * row_flags
        if balance < 0:
            raise InfeasibleTradeError(f"plan exhausts cash at period {h}")
        flags += row_flags
    return position, balance, flags


def plan_objective(price_path, holdings, cash: Cents, fee: Cents, plan: TradePlan) -> Cents:
    """Exact objective of a plan: terminal wealth at the path's last row minus
    the explicit fee term (fees also sit inside the cash walk — intentional
    double count, mirroring the models)."""
    path = np.asarray(price_path)
    if path.shape[0] != plan.n_periods + 1:
        raise DimensionMismatchError(
            f"plan with {plan.n_periods} trading rows needs {plan.n_periods + 1} price rows"
        )
    final_holdings, final_cash, flags = replay_plan(path, holdings, cash, fee, plan)
    terminal = path[-1]
    if np.issubdtype(terminal.dtype, np.floating) and np.all(terminal == np.round(terminal)):
        terminal = terminal.astype(np.int64)
    return int(terminal @ final_holdings) + final_cash - int(fee) * flags


def wrong_direction_value(price_path, plan: TradePlan, partition: DirectionalPartition) -> Cents:
    """Total traded value moving away from the target: sells of under-target
    assets plus buys of at/over-target assets, priced at their trade row."""
    path = np.asarray(price_path)
    total = 0
    for h in range(plan.n_periods):
        for a in partition.buy_set:
            total += int(path[h, a]) * int(plan.sells[h, a])
        for a in partition.sell_set:
            total += int(path[h, a]) * int(plan.buys[h, a])
    return total


def solve_to_plan(
    model: MilpModel,
    n_periods: int,
    n_assets: int,
    settings: SolveSettings | None = None,
) -> tuple[TradePlan, SolveOutcome]:
    """Solve a built policy model and decode the plan.

    Maps solver infeasibility to ``TargetInfeasibleError`` (the only way these
    models can be infeasible is the minimum-holdings target vs. available
    wealth); any other non-solution becomes a ``RuntimeError``.
    """
    outcome = solve(model, settings)
    if outcome.status == "infeasible":
        raise TargetInfeasibleError(
            "no feasible plan reaches the minimum target holdings from this state"
        )
    if not outcome.has_solution:
        raise RuntimeError(f"solve failed: {outcome.status}: {outcome.message}")
    return decode(outcome, n_periods, n_assets), outcome
