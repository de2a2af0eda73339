"""Independent brute-force oracle for the policy MILPs, plus the random
instance sampler used by the equivalence suites and the ``oracle-check`` CLI.

The oracle enumerates *canonical* integer plans: per period and asset it
chooses a net trade ``d`` (buys and sells never coexist in one cell, flags
are implied by ``d != 0``).  This is exhaustive in value: netting a cell's
buy against its sell and dropping quantity-zero flags never lowers cash,
never adds fees, and never increases the wrong-direction penalty, so some
canonical plan always attains the true optimum.  Search is depth-first over
periods with memoization on (period, holdings, cash); everything runs in
exact integer arithmetic, with the wrong-direction penalty applied as a
single float multiply per action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    AssetUniverse,
    PortfolioState,
    PriceMatrix,
    TargetPortfolio,
    TradePlan,
    TransitionInstance,
)
from .formulations import (
    DirectionalPartition,
    TargetInfeasibleError,
    build_base,
    build_directional,
    build_naive,
    build_penalized,
    compute_big_m,
    plan_objective,
    solve_to_plan,
    wrong_direction_value,
)
from .solver import SolveSettings

__all__ = [
    "OracleResult",
    "best_plan_exhaustive",
    "best_naive_plan",
    "sample_oracle_instance",
    "check_policy_instance",
]

_MODES = ("base", "directional", "penalized")


@dataclass(frozen=True, slots=True)
class OracleResult:
    """Exhaustive-search optimum: ``value`` and one attaining plan, or both
    ``None`` when no plan meets the target."""

    value: float | None
    plan: TradePlan | None

    @property
    def feasible(self) -> bool:
        return self.value is not None


def _period_actions(row, holdings, cash, can_buy, can_sell, fee):
    """All canonical net-trade vectors for one period.

    Yields ``(deltas, flags, cash_cost)`` with ``cash_cost`` the exact cash
    outflow (trade value plus fees).  Within a period sells fund buys, so the
    cash check applies to the period total; partial branches are pruned as
    soon as even selling every remaining permitted share cannot restore
    feasibility.
    """
    n = len(holdings)
    # suffix[a]: most cash assets a.. can still raise (sell-out of permitted assets)
    suffix = [0] * (n + 1)
    for a in range(n - 1, -1, -1):
        suffix[a] = suffix[a + 1] + (row[a] * holdings[a] if can_sell[a] else 0)
    deltas = [0] * n
    out = []

    def descend(a: int, cost: int, flags: int) -> None:
        if cost - suffix[a] > cash:
            return
        if a == n:
            out.append((tuple(deltas), flags, cost))
            return
        low = -holdings[a] if can_sell[a] else 0
        high = 0
        if can_buy[a]:
            afford = cash - cost + suffix[a + 1]
            if afford > 0:
                high = afford // row[a]
        price = row[a]
        for d in range(low, high + 1):
            deltas[a] = d
            if d:
                descend(a + 1, cost + price * d + fee, flags + 1)
            else:
                descend(a + 1, cost, flags)
        deltas[a] = 0

    descend(0, 0, 0)
    return out


def best_plan_exhaustive(
    price_path,
    holdings,
    cash: int,
    fee: int,
    target,
    *,
    mode: str = "base",
    partition: DirectionalPartition | None = None,
    penalty: float = 0.0,
    once_per_direction: bool = False,
) -> OracleResult:
    """Exact optimum over every feasible integer plan for the compact models.

    ``price_path`` has one terminal valuation row after the trading rows.
    ``mode="directional"`` forbids trades leaving the partition's direction;
    ``mode="penalized"`` docks ``penalty`` times wrong-direction traded value.
    ``once_per_direction=True`` additionally allows each asset at most one
    buying period and one selling period across the horizon.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown oracle mode {mode!r}")
    if mode in ("directional", "penalized") and partition is None:
        raise ValueError(f"{mode} oracle requires a partition")

    rows = [tuple(int(x) for x in r) for r in np.asarray(price_path)]
    if len(rows) < 2:
        raise ValueError("price path needs at least one trading row plus a valuation row")
    horizon = len(rows) - 1
    n = len(rows[0])
    start = tuple(int(x) for x in holdings)
    goal = tuple(int(x) for x in target)
    cash = int(cash)
    fee = int(fee)
    terminal = rows[horizon]

    buy_ok = [True] * n
    sell_ok = [True] * n
    penal_buy = [0.0] * n  # per-unit-value penalty multipliers by direction
    penal_sell = [0.0] * n
    if mode == "directional":
        for a in partition.sell_set:
            buy_ok[a] = False
        for a in partition.buy_set:
            sell_ok[a] = False
    elif mode == "penalized" and penalty > 0:
        for a in partition.buy_set:
            penal_sell[a] = penalty
        for a in partition.sell_set:
            penal_buy[a] = penalty

    memo: dict = {}

    def value_to_go(h, pos, bal, bought, sold):
        if h == horizon:
            if all(p >= g for p, g in zip(pos, goal)):
                return sum(y * p for y, p in zip(terminal, pos)) + bal, None
            return -math.inf, None
        key = (h, pos, bal, bought, sold)
        hit = memo.get(key)
        if hit is not None:
            return hit
        row = rows[h]
        if once_per_direction:
            can_buy = [buy_ok[a] and not (bought >> a) & 1 for a in range(n)]
            can_sell = [sell_ok[a] and not (sold >> a) & 1 for a in range(n)]
        else:
            can_buy, can_sell = buy_ok, sell_ok
        best = -math.inf
        best_action = None
        for deltas, flags, cost in _period_actions(row, pos, bal, can_buy, can_sell, fee):
            nxt_pos = tuple(p + d for p, d in zip(pos, deltas))
            nxt_bought, nxt_sold = bought, sold
            if once_per_direction:
                for a, d in enumerate(deltas):
                    if d > 0:
                        nxt_bought |= 1 << a
                    elif d < 0:
                        nxt_sold |= 1 << a
            tail, _ = value_to_go(h + 1, nxt_pos, bal - cost, nxt_bought, nxt_sold)
            if tail == -math.inf:
                continue
            step = tail - fee * flags
            if penalty > 0:
                wrong = 0
                for a, d in enumerate(deltas):
                    if d > 0 and penal_buy[a]:
                        wrong += row[a] * d
                    elif d < 0 and penal_sell[a]:
                        wrong -= row[a] * d
                if wrong:
                    step -= penalty * wrong
            if step > best:
                best = step
                best_action = (deltas, flags)
        memo[key] = (best, best_action)
        return best, best_action

    best, _ = value_to_go(0, start, cash, 0, 0)
    if best == -math.inf:
        return OracleResult(value=None, plan=None)

    # rebuild one optimal plan by replaying the memoized argmax actions
    buys = np.zeros((horizon, n), dtype=np.int64)
    sells = np.zeros((horizon, n), dtype=np.int64)
    pos, bal, bought, sold = start, cash, 0, 0
    for h in range(horizon):
        _, action = value_to_go(h, pos, bal, bought, sold)
        deltas, flags = action
        cost = 0
        for a, d in enumerate(deltas):
            if d > 0:
                buys[h, a] = d
                cost += rows[h][a] * d + fee
                bought |= 1 << a
            elif d < 0:
                sells[h, a] = -d
                cost += rows[h][a] * d + fee
                sold |= 1 << a
        pos = tuple(p + d for p, d in zip(pos, deltas))
        bal -= cost
    plan = TradePlan(
        buys=buys,
        sells=sells,
        buy_flags=(buys > 0).astype(np.int64),
        sell_flags=(sells > 0).astype(np.int64),
    )
    return OracleResult(value=float(best) if penalty > 0 else int(best), plan=plan)


def best_naive_plan(prices_row, holdings, cash: int, fee: int, target) -> OracleResult:
    """Oracle for the single-shot baseline: one trading day, valued at its own
    prices — exactly the compact search on the degenerate path ``[Y_0, Y_0]``."""
    row = np.asarray(prices_row).reshape(1, -1)
    return best_plan_exhaustive(
        np.vstack([row, row]), holdings, cash, fee, target, mode="base"
    )


def sample_oracle_instance(
    rng: np.random.Generator,
    *,
    max_assets: int = 3,
    max_periods: int = 4,
) -> TransitionInstance:
    """Random small instance sized for exhaustive search.

    Prices are whole dollars in [8, 20] (stored in cents), budgets stay below
    $100, and wealth is capped near six times the cheapest price so the
    enumeration stays shallow.  Fee headroom is enforced so the target is
    reachable even in the single-shot model.
    """
    n = int(rng.integers(1, max_assets + 1))
    horizon = int(rng.integers(1, max_periods + 1))
    start = rng.integers(10, 21, size=n)
    path = np.empty((horizon + 1, n), dtype=np.int64)
    path[0] = start
    for h in range(1, horizon + 1):
        path[h] = np.clip(path[h - 1] + rng.integers(-2, 3, size=n), 8, 20)

    fee = int(rng.choice([0, 1, 2]))
    for _ in range(200):
        holdings = rng.integers(0, 3, size=n)
        cash = int(rng.integers(5, 41))
        wealth = cash + int(path[0] @ holdings)
        if wealth // int(path.min()) > 6:
            continue
        target = rng.integers(0, 3, size=n)
        cost = int(path[0] @ target)
        if cost + fee * 2 * n <= wealth:
            break
    else:  # pragma: no cover - the draw space always contains tiny instances
        holdings = np.zeros(n, dtype=np.int64)
        cash, target = 30, np.zeros(n, dtype=np.int64)

    universe = AssetUniverse(symbols=tuple(f"A{i}" for i in range(n)))
    return TransitionInstance(
        universe=universe,
        initial=PortfolioState(holdings=holdings, cash=cash * 100),
        target=TargetPortfolio(min_shares=target),
        horizon=horizon,
        fee=fee * 100,
        prices=PriceMatrix(
            universe=universe,
            values=path * 100,
            period_labels=tuple(f"{h:04d}" for h in range(horizon + 1)),
        ),
    )


def _milp_objective(instance, build, n_periods, settings, eval_path, *, exact_penalty=None):
    """Solve one policy model and recompute its objective from the decoded
    plan in exact arithmetic.  Returns None on target infeasibility."""
    try:
        plan, _ = solve_to_plan(build(), n_periods, instance.n_assets, settings)
    except TargetInfeasibleError:
        return None, None
    value = plan_objective(
        eval_path, instance.initial.holdings, instance.initial.cash, instance.fee, plan
    )
    if exact_penalty is not None:
        lam, partition = exact_penalty
        value = value - lam * wrong_direction_value(eval_path, plan, partition)
    return value, plan


def check_policy_instance(
    instance: TransitionInstance,
    settings: SolveSettings | None = None,
    penalties: tuple[float, ...] = (0.25, 5.0),
    tolerance: float = 1e-6,
) -> dict:
    """Run every compact policy and its oracle on one instance.

    Returns a report dict with per-policy (milp, oracle) values, the
    formulation-relation checks, the big-M volume check, and a ``failures``
    list (empty means the instance passes everything).
    """
    settings = settings or SolveSettings()
    path = np.asarray(instance.prices.values[: instance.horizon + 1])
    holdings = instance.initial.holdings
    cash = instance.initial.cash
    fee = instance.fee
    target = instance.target.min_shares
    partition = DirectionalPartition.from_state(instance.initial, instance.target)
    failures: list[str] = []
    report: dict = {"failures": failures, "n_assets": instance.n_assets, "horizon": instance.horizon}

    def close(a, b):
        if a is None or b is None:
            return a is None and b is None
        return abs(a - b) <= tolerance

    # --- base ---------------------------------------------------------
    oracle_base = best_plan_exhaustive(path, holdings, cash, fee, target, mode="base")
    milp_base, _ = _milp_objective(
        instance, lambda: build_base(instance), instance.horizon, settings, path
    )
    report["base"] = (milp_base, oracle_base.value)
    if not close(milp_base, oracle_base.value):
        failures.append(f"base: milp={milp_base} oracle={oracle_base.value}")

    # --- directional ----------------------------------------------------
    oracle_dir = best_plan_exhaustive(
        path, holdings, cash, fee, target, mode="directional", partition=partition
    )
    milp_dir, _ = _milp_objective(
        instance, lambda: build_directional(instance), instance.horizon, settings, path
    )
    report["directional"] = (milp_dir, oracle_dir.value)
    if not close(milp_dir, oracle_dir.value):
        failures.append(f"directional: milp={milp_dir} oracle={oracle_dir.value}")

    # --- penalized (each requested strength) --------------------------
    report["penalized"] = {}
    for lam in penalties:
        oracle_pen = best_plan_exhaustive(
            path, holdings, cash, fee, target,
            mode="penalized", partition=partition, penalty=lam,
        )
        milp_pen, _ = _milp_objective(
            instance,
            lambda lam=lam: build_penalized(instance, penalty=lam),
            instance.horizon,
            settings,
            path,
            exact_penalty=(lam, partition),
        )
        report["penalized"][lam] = (milp_pen, oracle_pen.value)
        if not close(milp_pen, oracle_pen.value):
            failures.append(f"penalized[{lam}]: milp={milp_pen} oracle={oracle_pen.value}")

    # --- naive ----------------------------------------------------------
    oracle_naive = best_naive_plan(path[0], holdings, cash, fee, target)
    naive_path = np.vstack([path[0], path[0]])
    milp_naive, naive_plan = _milp_objective(
        instance, lambda: build_naive(instance), 1, settings, naive_path
    )
    report["naive"] = (milp_naive, oracle_naive.value)
    if not close(milp_naive, oracle_naive.value):
        failures.append(f"naive: milp={milp_naive} oracle={oracle_naive.value}")

    # --- formulation relations (MILP side, exact objectives) -----------
    milp_pen0, _ = _milp_objective(
        instance,
        lambda: build_penalized(instance, penalty=0.0),
        instance.horizon,
        settings,
        path,
        exact_penalty=(0.0, partition),
    )
    report["penalized_zero"] = milp_pen0
    if milp_base is not None:
        if milp_pen0 != milp_base:
            failures.append(f"penalized(0) != base: {milp_pen0} vs {milp_base}")
        for lam in penalties:
            pen_val = report["penalized"][lam][0]
            if pen_val is None or milp_dir is None:
                failures.append(f"relation chain hit infeasible at lam={lam}")
                continue
            if not (milp_dir - tolerance <= pen_val <= milp_base + tolerance):
                failures.append(
                    f"relation chain broken at lam={lam}: dir={milp_dir} pen={pen_val} base={milp_base}"
                )
        # heavy penalty must price out wrong-direction trades entirely
        heavy = max(penalties)
        if heavy >= 5.0:
            plan_heavy, _ = solve_to_plan(
                build_penalized(instance, penalty=heavy),
                instance.horizon,
                instance.n_assets,
                settings,
            )
            wrong = wrong_direction_value(path, plan_heavy, partition)
            if wrong != 0:
                failures.append(f"penalized({heavy}) has wrong-direction value {wrong}")
            if not close(report["penalized"][heavy][0], milp_dir):
                failures.append(
                    f"penalized({heavy})={report['penalized'][heavy][0]} != directional={milp_dir}"
                )

    # --- big-M validity on the oracle-optimal plan ---------------------
    schedule = compute_big_m(path[: instance.horizon], instance.initial_value())
    if oracle_base.plan is not None:
        volume = np.maximum(oracle_base.plan.buys, oracle_base.plan.sells)
        if np.any(volume > schedule.m[:, None]):
            failures.append("oracle-optimal volume exceeds big-M cap")
    report["big_m"] = schedule.m.tolist()
    return report
