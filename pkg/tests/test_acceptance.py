"""Acceptance checklist: one test per release gate, in order.

Every test prints a ``[PASS]``/``[FAIL]`` line (replayed at the end of the
run by the conftest terminal-summary hook) and asserts the same condition,
so the suite doubles as a human-readable checklist and a hard gate.

Run it alone with ``pytest tests/test_acceptance.py -v -s``.
"""

from __future__ import annotations

import math
import statistics
import time
import warnings

import numpy as np
import pytest

from changeover.colgen import (
    COLGEN_TRUE,
    DIRECTION_BUY,
    DIRECTION_SELL,
    build_master,
    enumerate_patterns,
)
from changeover.data_ingest import ScenarioSpec, synthetic_history
from changeover.engine import SimulationConfig, run
from changeover.experiments import (
    ExperimentSuite,
    RunRecord,
    SummaryTable,
    policy_from_name,
    run_suite,
    summarize,
    win_loss_tie,
)
from changeover.forecasting import ForecastConfig
from changeover.formulations import (
    DirectionalPartition,
    PolicyConfig,
    TargetInfeasibleError,
    build_base,
    build_penalized,
    plan_objective,
    solve_to_plan,
    wrong_direction_value,
)
from changeover.solver import SENSE_LE, SolveSettings
from changeover.verification import check_policy_instance, sample_oracle_instance

from conftest import record_acceptance_line

SETTINGS = SolveSettings()

# Desk-scale changeover suite used by the trading-behaviour and runtime
# gates: ten assets, a ten-day window, linear-trend forecasts, whole-share
# books.  Every scenario is a financing squeeze.  A handful of appreciating
# positions must be sold down to fund purchases of flat-priced assets, and
# the purchase bill is placed strictly between what all-but-one of the
# surplus positions raise at day-one prices and what the same sales raise
# at trend prices near the end of the window.  A planner that trades
# everything up front therefore has to open one extra sell position, while
# one that times its sells along the forecast covers the bill without it --
# and at these fee levels no timing game pays for an extra trade flag.
# Scenario construction only reads rows the drift forecaster itself sees.
DESK_SEED = 31
DESK_SCENARIOS = 30
DESK_HORIZON = 10
DESK_LOOKBACK = 48


def _check(ok: bool, label: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}"
    record_acceptance_line(line)
    print(line)
    assert ok, line


# --- shared suites -----------------------------------------------------------


@pytest.fixture(scope="module")
def oracle_suite():
    """200 exhaustively-checkable instances, each run through every compact
    policy and its independent search oracle."""
    rng = np.random.default_rng(96224)
    started = time.perf_counter()
    pairs = []
    for _ in range(200):
        instance = sample_oracle_instance(rng)
        pairs.append((instance, check_policy_instance(instance, SETTINGS)))
    return pairs, time.perf_counter() - started


def _failures(pairs, *prefixes: str) -> list[str]:
    out = []
    for _, report in pairs:
        out.extend(
            f for f in report["failures"] if f.startswith(prefixes)
        )
    return out


@pytest.fixture(scope="module")
def dominance_runs():
    """Perfect-forecast receding-horizon runs vs the day-one baseline on 20
    larger instances (up to 5 assets, 10 periods)."""
    rng = np.random.default_rng(7781)
    oracle_fc = ForecastConfig(method="oracle", lookback=1)
    runs = []
    for _ in range(20):
        instance = sample_oracle_instance(rng, max_assets=5, max_periods=10)
        rh = run(
            instance,
            config=SimulationConfig(
                policy=PolicyConfig(kind="base"), forecaster=oracle_fc, settings=SETTINGS
            ),
        )
        one_shot = run(
            instance,
            config=SimulationConfig(
                policy=PolicyConfig(kind="naive"), forecaster=oracle_fc, settings=SETTINGS
            ),
        )
        runs.append((instance, rh, one_shot))
    return runs


def _desk_history():
    return synthetic_history(
        10,
        120,
        seed=DESK_SEED,
        start_range=(6_000, 12_000),
        daily_move=0.003,
        trend_range=(-0.008, 0.008),
    )


def _desk_scenarios(history, count):
    """Draw ``count`` financing-squeeze scenarios off trend fits over the
    same lookback rows the drift forecaster sees."""
    rng = np.random.default_rng(DESK_SEED)
    values = np.asarray(history.prices.values, dtype=np.float64)
    n_periods, n = values.shape
    specs: list[ScenarioSpec] = []
    attempts = 0
    while len(specs) < count:
        attempts += 1
        if attempts > 4000:
            raise RuntimeError(f"only {len(specs)} desk scenarios after {attempts} draws")
        start = int(rng.integers(DESK_LOOKBACK, n_periods - DESK_HORIZON))
        window = values[start - DESK_LOOKBACK + 1 : start + 1]
        slopes, intercepts = np.polyfit(np.arange(float(DESK_LOOKBACK)), window, 1)
        y0 = values[start]
        fitted_end = intercepts + slopes * (DESK_LOOKBACK - 1 + DESK_HORIZON - 1)
        growth = (np.maximum(fitted_end, 1.0) - y0) / y0
        sellers = [a for a in range(n) if growth[a] >= 0.02]
        buyers = [a for a in range(n) if growth[a] <= 0.004]
        if not (3 <= len(sellers) <= 8) or len(buyers) < 2:
            continue
        n_s, n_b = len(sellers), len(buyers)
        budget = int(rng.integers(1_500_000, 2_500_001))
        fee = int(rng.choice((1500, 2000, 2500)))
        cash0 = int(rng.integers(500, 2_000))
        hold = np.zeros(n, dtype=np.int64)
        target = np.zeros(n, dtype=np.int64)
        excess = np.zeros(n, dtype=np.int64)
        for a in sellers:
            excess[a] = max(1, round(0.42 * budget / n_s / y0[a]))
            keep = max(1, round(0.25 * budget / n_s / y0[a]))
            hold[a] = keep + excess[a]
            target[a] = keep
        day_one = np.sort(excess[sellers] * y0[sellers])[::-1]
        day_end = np.sort(excess[sellers] * np.maximum(fitted_end, 1.0)[sellers])[::-1]
        fees_one_less = fee * (n_b + n_s - 1)
        lo = int(day_one[: n_s - 1].sum()) + cash0 - fees_one_less
        hi = int(day_end[: n_s - 1].sum() * 0.99) + cash0 - fees_one_less
        if hi - lo < int(0.012 * budget):
            continue
        deficits = np.zeros(n, dtype=np.int64)
        for a in buyers:
            deficits[a] = max(1, round((lo + hi) / 2 / n_b / y0[a]))
        cheapest = min(buyers, key=lambda a: y0[a])
        while int((deficits * y0).sum()) <= lo + fee:
            deficits[cheapest] += 1
        bill = int((deficits * y0).sum())
        if bill > hi - int(0.004 * budget):
            continue
        if int(day_one.sum()) + cash0 < bill + fee * (n_b + n_s):
            continue
        target = target + deficits
        specs.append(
            ScenarioSpec(
                name=f"desk-{len(specs):03d}",
                symbols=history.prices.universe.symbols,
                start_index=start,
                start_date=history.dates[start],
                horizon=DESK_HORIZON,
                fee=fee,
                initial_budget=int(y0 @ hold) + cash0,
                target_budget=int(y0 @ target),
                seed=attempts,
                initial_holdings=tuple(int(v) for v in hold),
                initial_cash=cash0,
                target_shares=tuple(int(v) for v in target),
            )
        )
    return tuple(specs)


@pytest.fixture(scope="module")
def desk_suite(tmp_path_factory):
    history = _desk_history()
    suite = ExperimentSuite(
        scenarios=_desk_scenarios(history, DESK_SCENARIOS),
        policies=(
            ("Naive", policy_from_name("Naive")),
            ("Directional", policy_from_name("Directional")),
        ),
        output_dir=str(tmp_path_factory.mktemp("desk")),
        forecaster=ForecastConfig(method="drift", lookback=DESK_LOOKBACK),
        settings=SolveSettings(time_limit=10.0, gap_tolerance=1e-5),
        mape_threshold=10.0,
    )
    return run_suite(suite, history)


# --- gates -------------------------------------------------------------------


def test_01_base_model_matches_exhaustive_search(oracle_suite):
    pairs, elapsed = oracle_suite
    bad = _failures(pairs, "base:")
    _check(
        not bad and elapsed < 300.0,
        f"01 base optimum == exhaustive search on {len(pairs)} random instances "
        f"(<=1e-6), suite ran in {elapsed:.0f}s (< 300s)"
        + (f"; first mismatch: {bad[0]}" if bad else ""),
    )


def test_02_restricted_variants_match_their_oracles(oracle_suite):
    pairs, _ = oracle_suite
    bad = _failures(pairs, "directional:", "penalized[", "naive:")
    _check(
        not bad,
        "02 directional / penalized / day-one optima == restricted search "
        "oracles (<=1e-6)" + (f"; first mismatch: {bad[0]}" if bad else ""),
    )


def test_03_objective_ordering_and_penalty_limits(oracle_suite):
    pairs, _ = oracle_suite
    tol = 1e-6
    bad: list[str] = []
    for _, report in pairs:
        base = report["base"][0]
        direction = report["directional"][0]
        if base is None:
            continue
        if report["penalized_zero"] != base:
            bad.append(f"penalty 0 != unrestricted: {report['penalized_zero']} vs {base}")
        for lam, (pen, _) in report["penalized"].items():
            if not (direction - tol <= pen <= base + tol):
                bad.append(f"ordering broken at lam={lam}")
        if abs(report["penalized"][5.0][0] - direction) > tol:
            bad.append("heavy penalty != direction-restricted optimum")
    bad.extend(_failures(pairs, "penalized(5.0) has wrong-direction"))
    _check(
        not bad,
        "03 directional <= penalized <= base on every instance; penalty 0 == "
        "base exactly; penalty 5 kills wrong-direction value and matches "
        "directional (<=1e-6)" + (f"; first: {bad[0]}" if bad else ""),
    )


def test_04_wrong_direction_value_shrinks_with_penalty():
    rng = np.random.default_rng(4242)
    grid = (0.0, 0.25, 0.5, 0.75, 5.0)
    worst = 0
    for _ in range(20):
        instance = sample_oracle_instance(rng)
        path = np.asarray(instance.prices.values)
        partition = DirectionalPartition.from_state(instance.initial, instance.target)
        values = []
        for lam in grid:
            try:
                plan, _ = solve_to_plan(
                    build_penalized(instance, penalty=lam),
                    instance.horizon,
                    instance.n_assets,
                    SETTINGS,
                )
            except TargetInfeasibleError:
                values = []
                break
            values.append(wrong_direction_value(path, plan, partition))
        for earlier, later in zip(values, values[1:]):
            worst = max(worst, later - earlier)
    _check(
        worst <= 0,
        "04 wrong-direction trade value at the optimum is non-increasing over "
        f"penalty grid {grid} on 20 fixed instances (max increase {worst})",
    )


def test_05_volume_caps_cover_optimal_plans(oracle_suite):
    pairs, _ = oracle_suite
    bad = _failures(pairs, "oracle-optimal volume exceeds")
    _check(
        not bad,
        "05 no search-optimal plan trades above the per-period volume cap "
        f"on any of {len(pairs)} instances",
    )


def test_06_pattern_enumeration_counts():
    month = enumerate_patterns(range(2), 30, 2, DIRECTION_SELL, mode="joint")
    ok = len(month) == 961 == 30 * 30 + 2 * 30 + 1

    def count_choices(assets_left: int, days: int) -> int:
        if assets_left == 0:
            return 1
        return (days + 1) * count_choices(assets_left - 1, days)

    checked = 0
    for k in range(1, 4):
        for horizon in range(1, 5):
            joint = enumerate_patterns(range(k), horizon, k, DIRECTION_BUY, mode="joint")
            expected = count_choices(k, horizon)
            distinct = {p.schedule.tobytes() for p in joint}
            ok = ok and len(joint) == expected == (horizon + 1) ** k == len(distinct)
            checked += 1
    _check(
        ok,
        "06 joint pattern enumeration: 961 for 2 assets over 30 days; "
        f"(T+1)^k == recursive count on {checked} (k, T) pairs",
    )


def _augmented_base_value(instance):
    model = build_base(instance)
    for a in range(instance.n_assets):
        model.add_constraint(
            f"buy_once_{a}",
            {f"wp_{h}_{a}": 1.0 for h in range(instance.horizon)},
            SENSE_LE,
            1.0,
        )
        model.add_constraint(
            f"sell_once_{a}",
            {f"wn_{h}_{a}": 1.0 for h in range(instance.horizon)},
            SENSE_LE,
            1.0,
        )
    return _plan_value(instance, model)


def _plan_value(instance, model):
    try:
        plan, _ = solve_to_plan(model, instance.horizon, instance.n_assets, SETTINGS)
    except TargetInfeasibleError:
        return None
    path = np.asarray(instance.prices.values)
    return plan_objective(
        path, instance.initial.holdings, instance.initial.cash, instance.fee, plan
    )


def _master_value(instance, mode: str):
    n, horizon = instance.n_assets, instance.horizon
    buys = enumerate_patterns(range(n), horizon, n, DIRECTION_BUY, mode=mode)
    sells = enumerate_patterns(range(n), horizon, n, DIRECTION_SELL, mode=mode)
    model = build_master(instance, buy_patterns=buys, sell_patterns=sells, variant=COLGEN_TRUE)
    return _plan_value(instance, model)


def test_07_pattern_masters_match_restricted_compact(oracle_suite):
    pairs, _ = oracle_suite
    bad = []
    for instance, _ in pairs:
        joint = _master_value(instance, "joint")
        decomposed = _master_value(instance, "per-asset")
        compact = _augmented_base_value(instance)
        if not (joint == decomposed == compact):
            bad.append(f"joint={joint} per-asset={decomposed} compact={compact}")
    _check(
        not bad,
        "07 pattern-selection masters == compact base + once-per-direction "
        f"rows, joint == per-asset, exactly, on {len(pairs)} instances"
        + (f"; first: {bad[0]}" if bad else ""),
    )


def test_08_perfect_forecasts_beat_day_one_plan(dominance_runs):
    bad = []
    for instance, rh, one_shot in dominance_runs:
        if not (rh.succeeded and one_shot.succeeded):
            bad.append(f"statuses {rh.status}/{one_shot.status}")
        elif rh.terminal_value < one_shot.terminal_value - 1e-6:
            bad.append(f"{rh.terminal_value} < {one_shot.terminal_value}")
    _check(
        not bad,
        "08 oracle-forecast receding horizon ends >= day-one baseline on the "
        f"same price path, {len(dominance_runs)} instances (<=1e-6 slack)"
        + (f"; first: {bad[0]}" if bad else ""),
    )


def test_09_books_balance_every_period(dominance_runs):
    rng = np.random.default_rng(5150)
    oracle_fc = ForecastConfig(method="oracle", lookback=1)
    results = [r for _, rh, one_shot in dominance_runs for r in (rh, one_shot)]
    for kind in ("directional", "penalized"):
        for _ in range(5):
            instance = sample_oracle_instance(rng, max_assets=4, max_periods=6)
            results.append(
                run(
                    instance,
                    config=SimulationConfig(
                        policy=PolicyConfig(kind=kind, penalty=0.25),
                        forecaster=oracle_fc,
                        settings=SETTINGS,
                    ),
                    scenario_name=f"books-{kind}",
                )
            )
            results[-1].records  # touch: every run must carry period records
    bad = []
    periods = 0
    for result in results:
        for rec in result.records:
            periods += 1
            prices = np.asarray(rec.prices, dtype=np.int64)
            holdings = np.asarray(rec.holdings, dtype=np.int64)
            if rec.value != int(prices @ holdings) + rec.cash:
                bad.append(f"{result.policy} t={rec.t}: value identity broken")
            if rec.cash < 0 or np.any(holdings < 0):
                bad.append(f"{result.policy} t={rec.t}: negative cash or holdings")
        if result.succeeded and not result.target_satisfied:
            bad.append(f"{result.policy}: success without target")
    _check(
        not bad,
        f"09 V_t == prices . holdings + cash, cash >= 0, holdings >= 0 in "
        f"exact integer arithmetic over {periods} simulated periods; "
        "successful runs end at or above target"
        + (f"; first: {bad[0]}" if bad else ""),
    )


def test_10_fewer_trades_and_fees_than_day_one_baseline(desk_suite):
    ok_records = desk_suite.successful()
    trades = summarize(ok_records, "trades").rows
    fees = summarize(ok_records, "fees").rows
    ok = (
        trades["Directional"].mean < trades["Naive"].mean
        and fees["Directional"].mean < fees["Naive"].mean
    )
    _check(
        ok,
        f"10 desk scale ({DESK_SCENARIOS} scenarios, 10 assets, 10 days, drift "
        f"forecasts): mean trades Directional {trades['Directional'].mean:.2f} < "
        f"Naive {trades['Naive'].mean:.2f}; mean fees "
        f"{fees['Directional'].mean:.0f} < {fees['Naive'].mean:.0f} (cents)",
    )


def test_11_desk_scale_solves_stay_fast(desk_suite):
    slowest = max(
        (s for rec in desk_suite.records for s in rec.period_solve_seconds if s > 0.0),
        default=0.0,
    )
    schema_ok = SummaryTable.COLUMNS == ("mean", "std_dev", "median", "max", "min")
    _check(
        slowest < 5.0 and schema_ok,
        f"11 every 10-asset 10-day solve < 5s (slowest {slowest:.2f}s); summary "
        "schema is the five-column mean/std_dev/median/max/min layout",
    )


# --- statistics oracles --------------------------------------------------------


def _random_records(rng) -> list[RunRecord]:
    policies = ("Alpha", "Beta", "Gamma")[: int(rng.integers(1, 4))]
    n_scen = int(rng.integers(1, 7))
    records = []
    for policy in policies:
        for s in range(n_scen):
            failed = s > 0 and rng.random() < 0.2
            trades = int(rng.integers(0, 40))
            fee = int(rng.integers(0, 500))
            solves = tuple(
                round(float(x), 6) for x in rng.uniform(0.0, 2.0, size=int(rng.integers(1, 5)))
            )
            pct = round(float(rng.normal(0.0, 3.0)), 4)
            records.append(
                RunRecord(
                    scenario=f"s{s:02d}",
                    policy=policy,
                    status="infeasible" if failed else "success",
                    failure_period=0 if failed else None,
                    failure_reason="midway" if failed else None,
                    initial_value=10_000,
                    terminal_value=None if failed else 10_000 + trades,
                    percent_change=None if failed else pct,
                    trades=trades,
                    fees=trades * fee,
                    mean_forecast_mape=None,
                    total_solve_seconds=float(sum(solves)),
                    period_solve_seconds=() if failed else solves,
                )
            )
    return records


def _expected_samples(records, metric):
    out: dict[str, list[float]] = {}
    for rec in records:
        if rec.status != "success":
            continue
        if metric == "runtime":
            out.setdefault(rec.policy, []).extend(s for s in rec.period_solve_seconds if s > 0)
        else:
            value = {
                "percent_change": rec.percent_change,
                "trades": float(rec.trades),
                "fees": float(rec.fees),
            }[metric]
            out.setdefault(rec.policy, []).append(float(value))
    return {p: v for p, v in out.items() if v}


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def test_12_statistics_match_independent_recomputation():
    rng = np.random.default_rng(12321)
    metrics = ("percent_change", "trades", "fees", "runtime")
    mismatches = []
    for trial in range(1000):
        records = _random_records(rng)

        metric = metrics[trial % len(metrics)]
        expected = _expected_samples(records, metric)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = summarize(records, metric)
        if set(table.rows) != set(expected):
            mismatches.append(f"trial {trial}: row set {set(table.rows)} != {set(expected)}")
            continue
        for policy, stats in table.rows.items():
            values = expected[policy]
            want = (
                statistics.fmean(values),
                statistics.stdev(values) if len(values) > 1 else 0.0,
                statistics.median(values),
                max(values),
                min(values),
            )
            got = (stats.mean, stats.std_dev, stats.median, stats.maximum, stats.minimum)
            if not all(_close(g, w) for g, w in zip(got, want)) or stats.count != len(values):
                mismatches.append(f"trial {trial}: {metric}/{policy}: {got} != {want}")

        wlt_metric = ("percent_change", "trades", "fees")[trial % 3]
        tol = (0.0, 0.005, 0.5)[trial % 3]
        by_policy = _expected_samples(records, wlt_metric)
        per_scenario = {
            p: {
                r.scenario: float(
                    r.percent_change
                    if wlt_metric == "percent_change"
                    else getattr(r, wlt_metric)
                )
                for r in records
                if r.policy == p and r.status == "success"
            }
            for p in by_policy
        }
        table = win_loss_tie(records, metric=wlt_metric, tie_tolerance=tol)
        if tuple(sorted(per_scenario)) != table.policies:
            mismatches.append(f"trial {trial}: policy tuple mismatch")
            continue
        for a in table.policies:
            for b in table.policies:
                wins = losses = ties = 0
                for scenario in set(per_scenario[a]) & set(per_scenario[b]):
                    diff = per_scenario[a][scenario] - per_scenario[b][scenario]
                    if abs(diff) <= tol:
                        ties += 1
                    elif diff > 0:
                        wins += 1
                    else:
                        losses += 1
                if table.entries[a][b] != (wins, losses, ties):
                    mismatches.append(
                        f"trial {trial}: wlt[{a}][{b}] {table.entries[a][b]} != "
                        f"{(wins, losses, ties)}"
                    )
    _check(
        not mismatches,
        "12 summary statistics and win/loss/tie counts match independent "
        "recomputation on 1000 randomized record sets (counts exact, moments "
        "<=1e-9 relative)" + (f"; first: {mismatches[0]}" if mismatches else ""),
    )
