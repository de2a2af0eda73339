"""Pattern-selection reformulation of the base model.

Instead of free per-period action binaries, each asset's *timing* is chosen
from an enumerated set of action patterns ("buy asset a on day 3", "never
sell asset b", ...).  Binary selection variables pick exactly one pattern per
convexity group; quantities remain compact integer variables linked to the
selected pattern's cells.  Two enumeration shapes ship:

* ``joint`` — one pattern spans all relevant assets; ``(T+1)^k`` columns for
  ``k`` assets and one convexity row per direction.  Faithful to the classic
  single-λ layout but exponential, so it is capped and used for cross-checks.
* ``per-asset`` (default) — one group per asset and direction, ``T+1``
  columns each.  Spans the same feasible set (any combination of per-asset
  timings is reachable), with linearly many columns.

Either way the model restricts the base problem: each asset is bought at most
once and sold at most once over the horizon.  ``colgen_false`` applies the
pattern treatment to buys only and keeps compact per-period sell binaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .domain import (
    DimensionMismatchError,
    PortfolioState,
    TargetPortfolio,
    TransitionInstance,
    portfolio_value,
)
from .formulations import _TIE_BREAK_SCALE, compute_big_m
from .solver import (
    BINARY,
    INTEGER,
    SENSE_EQ,
    SENSE_GE,
    SENSE_LE,
    MilpModel,
)

__all__ = [
    "COLGEN_TRUE",
    "COLGEN_FALSE",
    "DIRECTION_BUY",
    "DIRECTION_SELL",
    "ActionPattern",
    "PatternCountError",
    "enumerate_patterns",
    "prune_completed",
    "build_master",
]

COLGEN_TRUE = "colgen_true"
COLGEN_FALSE = "colgen_false"
DIRECTION_BUY = "buy"
DIRECTION_SELL = "sell"


class PatternCountError(RuntimeError):
    """Joint enumeration would exceed the pattern cap."""


@dataclass(frozen=True, slots=True)
class ActionPattern:
    """One timing choice: a binary (horizon x assets) schedule whose columns
    each carry at most a single action day.  ``asset`` tags the convexity
    group: an asset index for per-asset columns, ``None`` for joint columns
    (one group per direction)."""

    direction: str
    schedule: np.ndarray
    asset: int | None = None

    def __post_init__(self) -> None:
        if self.direction not in (DIRECTION_BUY, DIRECTION_SELL):
            raise ValueError(f"direction must be buy or sell, got {self.direction!r}")
        sched = np.asarray(self.schedule, dtype=np.int64)
        if sched.ndim != 2:
            raise DimensionMismatchError("schedule must be a (horizon x assets) matrix")
        if not np.isin(sched, (0, 1)).all():
            raise ValueError("schedule entries must be 0/1")
        if np.any(sched.sum(axis=0) > 1):
            raise ValueError("each asset may be scheduled at most once per pattern")
        sched = sched.copy()
        sched.setflags(write=False)
        object.__setattr__(self, "schedule", sched)

    @property
    def is_never_act(self) -> bool:
        return not self.schedule.any()

    def active_assets(self) -> tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.schedule.any(axis=0)))


def enumerate_patterns(
    relevant_assets,
    horizon: int,
    n_assets: int,
    direction: str,
    *,
    cap: int = 100_000,
    mode: str = "per-asset",
) -> list[ActionPattern]:
    """Enumerate timing patterns for one direction.

    Each relevant asset independently picks one of ``horizon`` action days or
    "never", so the joint enumeration has ``(horizon+1)**k`` patterns — it
    raises ``PatternCountError`` beyond ``cap`` (use per-asset mode instead,
    which needs only ``k*(horizon+1)`` columns).  Never-act patterns are
    always included, one per convexity group.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if mode not in ("joint", "per-asset"):
        raise ValueError(f"unknown enumeration mode {mode!r}")
    assets = sorted(int(a) for a in relevant_assets)
    if any(a < 0 or a >= n_assets for a in assets):
        raise ValueError("relevant asset index out of range")

    if mode == "joint":
        count = (horizon + 1) ** len(assets)
        if count > cap:
            raise PatternCountError(
                f"joint enumeration needs {count} patterns (> cap {cap}); "
                "use per-asset decomposition mode"
            )
        patterns = []
        # day index `horizon` encodes "never act"
        for choice in product(range(horizon + 1), repeat=len(assets)):
            sched = np.zeros((horizon, n_assets), dtype=np.int64)
            for a, day in zip(assets, choice):
                if day < horizon:
                    sched[day, a] = 1
            patterns.append(ActionPattern(direction=direction, schedule=sched, asset=None))
        return patterns

    patterns = []
    for a in assets:
        for day in range(horizon + 1):
            sched = np.zeros((horizon, n_assets), dtype=np.int64)
            if day < horizon:
                sched[day, a] = 1
            patterns.append(ActionPattern(direction=direction, schedule=sched, asset=a))
    if not patterns:  # no relevant assets: keep a lone never-act column
        patterns.append(
            ActionPattern(
                direction=direction,
                schedule=np.zeros((horizon, n_assets), dtype=np.int64),
                asset=None,
            )
        )
    return patterns


def prune_completed(
    patterns: list[ActionPattern],
    state: PortfolioState,
    target: TargetPortfolio,
) -> list[ActionPattern]:
    """Drop patterns that act on assets already done with that direction:
    sells of assets at/below target, buys of assets at/above target.
    Never-act patterns always survive, so every convexity group stays
    satisfiable."""
    if state.n_assets != target.n_assets:
        raise DimensionMismatchError("holdings and target lengths differ")
    holdings = state.holdings
    goal = target.min_shares
    kept = []
    for pat in patterns:
        active = pat.active_assets()
        if pat.direction == DIRECTION_SELL and any(holdings[a] <= goal[a] for a in active):
            continue
        if pat.direction == DIRECTION_BUY and any(holdings[a] >= goal[a] for a in active):
            continue
        kept.append(pat)
    return kept


def _group_key(pattern: ActionPattern) -> tuple:
    return (pattern.direction, pattern.asset)


def build_master(
    instance: TransitionInstance,
    price_path=None,
    state: PortfolioState | None = None,
    buy_patterns: list[ActionPattern] | None = None,
    sell_patterns: list[ActionPattern] | None = None,
    variant: str = COLGEN_TRUE,
) -> MilpModel:
    """Pattern-selection master with the base model's dynamics and objective.

    Flags ``wp``/``wn`` become continuous cells equal to the selected
    pattern's schedule (``colgen_false`` keeps compact binary ``wn``); each
    convexity group picks exactly one pattern.  Everything else — integer
    quantities, balance rows, big-M links, fee charging, target rows — is
    identical to the compact base model, so decoded plans share one code path.
    """
    if variant not in (COLGEN_TRUE, COLGEN_FALSE):
        raise ValueError(f"unknown master variant {variant!r}")
    if not buy_patterns:
        raise ValueError("buy pattern list must be non-empty (include never-act)")
    if variant == COLGEN_TRUE and not sell_patterns:
        raise ValueError("sell pattern list must be non-empty (include never-act)")
    path = (
        np.asarray(instance.prices.values[: instance.horizon + 1], dtype=np.float64)
        if price_path is None
        else np.asarray(price_path, dtype=np.float64)
    )
    state = instance.initial if state is None else state
    if path.ndim != 2 or path.shape[1] != instance.n_assets:
        raise DimensionMismatchError("price path must be (periods x assets) for this instance")
    if path.shape[0] < 2:
        raise ValueError("price path needs at least one trading row and one valuation row")
    horizon = path.shape[0] - 1
    n = instance.n_assets
    fee = instance.fee
    for pat in buy_patterns + (sell_patterns or []):
        if pat.schedule.shape != (horizon, n):
            raise DimensionMismatchError(
                f"pattern schedule {pat.schedule.shape} does not match ({horizon}, {n})"
            )
    value_now = portfolio_value(state, np.asarray(price_path if price_path is not None else path)[0])
    schedule_m = compute_big_m(path[:horizon], value_now)

    model = MilpModel(name=f"changeover_{variant}")
    for h in range(horizon):
        cap = float(schedule_m.m[h])
        for a in range(n):
            model.add_variable(f"zp_{h}_{a}", INTEGER, 0.0, cap)
            model.add_variable(f"zn_{h}_{a}", INTEGER, 0.0, cap)
            model.add_variable(f"wp_{h}_{a}", lower=0.0, upper=1.0)
            if variant == COLGEN_TRUE:
                model.add_variable(f"wn_{h}_{a}", lower=0.0, upper=1.0)
            else:
                model.add_variable(f"wn_{h}_{a}", BINARY)
            model.add_variable(f"hold_{h}_{a}", lower=0.0, upper=None)
        model.add_variable(f"cash_{h}", lower=0.0, upper=None)

    for i in range(len(buy_patterns)):
        model.add_variable(f"pbuy_{i}", BINARY)
    if variant == COLGEN_TRUE:
        for i in range(len(sell_patterns)):
            model.add_variable(f"psell_{i}", BINARY)

    # exactly one pattern per convexity group
    groups: dict[tuple, dict[str, float]] = {}
    for i, pat in enumerate(buy_patterns):
        groups.setdefault(_group_key(pat), {})[f"pbuy_{i}"] = 1.0
    if variant == COLGEN_TRUE:
        for i, pat in enumerate(sell_patterns):
            groups.setdefault(_group_key(pat), {})[f"psell_{i}"] = 1.0
    for (direction, asset), coeffs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        tag = "joint" if asset is None else str(asset)
        model.add_constraint(f"pick_{direction}_{tag}", coeffs, SENSE_EQ, 1.0)

    # flag cells equal the selected patterns' schedules
    for h in range(horizon):
        for a in range(n):
            coeffs = {f"wp_{h}_{a}": 1.0}
            for i, pat in enumerate(buy_patterns):
                if pat.schedule[h, a]:
                    coeffs[f"pbuy_{i}"] = -1.0
            model.add_constraint(f"wdef_buy_{h}_{a}", coeffs, SENSE_EQ, 0.0)
            if variant == COLGEN_TRUE:
                coeffs = {f"wn_{h}_{a}": 1.0}
                for i, pat in enumerate(sell_patterns):
                    if pat.schedule[h, a]:
                        coeffs[f"psell_{i}"] = -1.0
                model.add_constraint(f"wdef_sell_{h}_{a}", coeffs, SENSE_EQ, 0.0)

    for h in range(horizon):
        for a in range(n):
            coeffs = {f"hold_{h}_{a}": 1.0, f"zp_{h}_{a}": -1.0, f"zn_{h}_{a}": 1.0}
            rhs = 0.0
            if h == 0:
                rhs = float(state.holdings[a])
            else:
                coeffs[f"hold_{h - 1}_{a}"] = -1.0
            model.add_constraint(f"hold_bal_{h}_{a}", coeffs, SENSE_EQ, rhs)
            model.add_constraint(
                f"link_buy_{h}_{a}",
                {f"zp_{h}_{a}": 1.0, f"wp_{h}_{a}": -float(schedule_m.m[h])},
                SENSE_LE,
                0.0,
            )
            model.add_constraint(
                f"link_sell_{h}_{a}",
                {f"zn_{h}_{a}": 1.0, f"wn_{h}_{a}": -float(schedule_m.m[h])},
                SENSE_LE,
                0.0,
            )
            # a cell never buys and sells at once, whichever direction owns it
            model.add_constraint(
                f"one_side_{h}_{a}",
                {f"wp_{h}_{a}": 1.0, f"wn_{h}_{a}": 1.0},
                SENSE_LE,
                1.0,
            )
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
    model.set_objective(objective, maximize=True)
    return model
