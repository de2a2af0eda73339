"""Batch experiment harness: run a roster of policies over a scenario set,
collect per-run records, and compute the summary statistics used throughout
the result tables.

Every policy sees *identical* forecasts for a given scenario period — they
are computed once per scenario up front and handed to each run — so policy
comparisons isolate the policy, not forecaster noise.  Scenarios whose mean
forecast MAPE exceeds the threshold are excluded from statistics but logged.

The raw store splits into two line-delimited files: ``results.jsonl`` holds
everything deterministic (byte-identical across reruns of the same seed) and
``runtimes.jsonl`` holds wall-clock measurements, which are inherently not.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data_ingest import MarketHistory, ScenarioSpec, instance_from_spec
from .engine import SimulationConfig, SimulationResult, percent_change, run
from .forecasting import ForecastConfig, exclude_scenario, mape
from .formulations import POLICY_NAIVE, PolicyConfig
from .solver import SolveSettings

__all__ = [
    "ExperimentSuite",
    "RunRecord",
    "SuiteOutcome",
    "SummaryTable",
    "WinLossTie",
    "METRICS",
    "policy_from_name",
    "default_roster",
    "run_suite",
    "summarize",
    "win_loss_tie",
    "load_records",
]

METRIC_PERCENT_CHANGE = "percent_change"
METRIC_TRADES = "trades"
METRIC_FEES = "fees"
METRIC_RUNTIME = "runtime"
METRICS = (METRIC_PERCENT_CHANGE, METRIC_TRADES, METRIC_FEES, METRIC_RUNTIME)

DEFAULT_TIE_TOLERANCE = 0.005

RESULTS_FILE = "results.jsonl"
RUNTIMES_FILE = "runtimes.jsonl"
EXCLUSIONS_FILE = "exclusions.jsonl"


def policy_from_name(name: str) -> PolicyConfig | str:
    """Map a roster name to its policy: Naive, Base, Directional,
    DirP_<percent> (penalty = percent/100), ColGen_True, ColGen_False."""
    if name == "Naive":
        return PolicyConfig(kind="naive")
    if name == "Base":
        return PolicyConfig(kind="base")
    if name == "Directional":
        return PolicyConfig(kind="directional")
    if name.startswith("DirP_"):
        tail = name[len("DirP_") :]
        try:
            percent = int(tail)
        except ValueError:
            raise ValueError(f"bad penalty suffix in policy name {name!r}") from None
        return PolicyConfig(kind="penalized", penalty=percent / 100.0)
    if name == "ColGen_True":
        return "colgen_true"
    if name == "ColGen_False":
        return "colgen_false"
    raise ValueError(f"unknown policy name {name!r}")


def default_roster() -> tuple[tuple[str, PolicyConfig | str], ...]:
    names = (
        "Naive",
        "Directional",
        "DirP_0",
        "DirP_25",
        "DirP_50",
        "DirP_75",
        "DirP_500",
        "ColGen_True",
        "ColGen_False",
    )
    return tuple((name, policy_from_name(name)) for name in names)


@dataclass(frozen=True, slots=True)
class ExperimentSuite:
    """A full experiment: scenario set x policy roster, one forecaster and
    solver configuration shared by every run."""

    scenarios: tuple[ScenarioSpec, ...]
    policies: tuple[tuple[str, PolicyConfig | str], ...]
    output_dir: str
    forecaster: ForecastConfig = field(default_factory=ForecastConfig)
    settings: SolveSettings = field(default_factory=SolveSettings)
    mape_threshold: float = 10.0
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.scenarios:
            raise ValueError("suite needs at least one scenario")
        if not self.policies:
            raise ValueError("suite needs at least one policy")
        names = [n for n, _ in self.policies]
        if len(set(names)) != len(names):
            raise ValueError("duplicate policy names in the roster")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


@dataclass(frozen=True, slots=True)
class RunRecord:
    """Flattened outcome of one (scenario, policy) run: the deterministic
    fields plus the volatile solve timings kept separately on disk."""

    scenario: str
    policy: str
    status: str
    failure_period: int | None
    failure_reason: str | None
    initial_value: int
    terminal_value: int | None
    percent_change: float | None
    trades: int
    fees: int
    mean_forecast_mape: float | None
    total_solve_seconds: float
    period_solve_seconds: tuple[float, ...]

    @property
    def succeeded(self) -> bool:
        return self.status == "success"

    def result_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "policy": self.policy,
            "status": self.status,
            "failure_period": self.failure_period,
            "failure_reason": self.failure_reason,
            "initial_value": self.initial_value,
            "terminal_value": self.terminal_value,
            "percent_change": self.percent_change,
            "trades": self.trades,
            "fees": self.fees,
            "mean_forecast_mape": self.mean_forecast_mape,
        }

    def runtime_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "policy": self.policy,
            "total_solve_seconds": self.total_solve_seconds,
            "period_solve_seconds": list(self.period_solve_seconds),
        }


@dataclass(frozen=True, slots=True)
class SuiteOutcome:
    records: tuple[RunRecord, ...]
    exclusions: tuple[dict, ...]

    def successful(self) -> tuple[RunRecord, ...]:
        return tuple(r for r in self.records if r.succeeded)


def _record_from_result(result: SimulationResult) -> RunRecord:
    return RunRecord(
        scenario=result.scenario,
        policy=result.policy,
        status=result.status,
        failure_period=result.failure_period,
        failure_reason=result.failure_reason,
        initial_value=result.initial_value,
        terminal_value=result.terminal_value,
        percent_change=percent_change(result) if result.terminal_value is not None else None,
        trades=result.total_flags,
        fees=result.total_fees,
        mean_forecast_mape=result.mean_forecast_mape,
        total_solve_seconds=result.total_solve_seconds,
        period_solve_seconds=tuple(r.solve_seconds for r in result.records),
    )


def _shared_forecasts(instance, panel, start_index, forecaster):
    """One forecast per simulation period, shared by every policy, plus the
    scenario-level mean MAPE used by the exclusion rule."""
    from .engine import forecast_for_period

    window = np.asarray(instance.prices.values)
    forecasts: dict[int, np.ndarray] = {}
    mapes = []
    for t in range(instance.horizon):
        remaining = instance.horizon - t
        fc = forecast_for_period(panel, start_index + t, forecaster, remaining)
        forecasts[t] = fc.values
        mapes.append(mape(fc.values, window[t + 1 : t + 1 + remaining]))
    return forecasts, float(np.mean(mapes))


def _run_one(history, spec, policy_name, policy, forecaster, settings, forecasts):
    instance = instance_from_spec(spec, history)
    config = SimulationConfig(policy=policy, forecaster=forecaster, settings=settings)
    result = run(
        instance,
        history,
        config,
        start_index=spec.start_index,
        shared_forecasts=forecasts,
        scenario_name=spec.name,
    )
    result = replace(result, policy=policy_name)
    return _record_from_result(result)


_POOL_HISTORY: MarketHistory | None = None


def _pool_init(history: MarketHistory) -> None:
    global _POOL_HISTORY
    _POOL_HISTORY = history


def _pool_task(args):
    spec, policy_name, policy, forecaster, settings, forecasts = args
    return _run_one(_POOL_HISTORY, spec, policy_name, policy, forecaster, settings, forecasts)


def run_suite(suite: ExperimentSuite, history: MarketHistory) -> SuiteOutcome:
    """Run every (scenario, policy) pair once and persist the raw store.

    Scenarios are pre-screened: shared forecasts are computed, and any
    scenario whose mean MAPE exceeds the threshold is logged to the exclusion
    file and never run.  Records are sorted by (scenario, policy) before
    writing so the results file is byte-identical however workers finish.
    """
    panel_cols: dict[tuple[str, ...], np.ndarray] = {}
    tasks = []
    exclusions = []
    for spec in suite.scenarios:
        instance = instance_from_spec(spec, history)
        if spec.symbols not in panel_cols:
            cols = [history.prices.universe.index_of(s) for s in spec.symbols]
            panel_cols[spec.symbols] = np.asarray(history.prices.values)[:, cols]
        panel = panel_cols[spec.symbols]
        forecasts, scenario_mape = _shared_forecasts(
            instance, panel, spec.start_index, suite.forecaster
        )
        if exclude_scenario(scenario_mape, suite.mape_threshold):
            exclusions.append(
                {
                    "scenario": spec.name,
                    "mean_forecast_mape": scenario_mape,
                    "threshold": suite.mape_threshold,
                }
            )
            continue
        for policy_name, policy in suite.policies:
            tasks.append((spec, policy_name, policy, suite.forecaster, suite.settings, forecasts))

    if suite.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(
            max_workers=suite.jobs, initializer=_pool_init, initargs=(history,)
        ) as pool:
            records = list(pool.map(_pool_task, tasks))
    else:
        records = [_run_one(history, *task) for task in tasks]

    records.sort(key=lambda r: (r.scenario, r.policy))
    os.makedirs(suite.output_dir, exist_ok=True)
    with open(os.path.join(suite.output_dir, RESULTS_FILE), "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.result_row(), sort_keys=True) + "\n")
    with open(os.path.join(suite.output_dir, RUNTIMES_FILE), "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.runtime_row(), sort_keys=True) + "\n")
    with open(os.path.join(suite.output_dir, EXCLUSIONS_FILE), "w", encoding="utf-8") as fh:
        for row in exclusions:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return SuiteOutcome(records=tuple(records), exclusions=tuple(exclusions))


def load_records(output_dir: str) -> tuple[RunRecord, ...]:
    """Rebuild RunRecords from a raw store directory (results + runtimes)."""
    runtimes: dict[tuple[str, str], dict] = {}
    runtime_path = os.path.join(output_dir, RUNTIMES_FILE)
    if os.path.exists(runtime_path):
        with open(runtime_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    runtimes[(row["scenario"], row["policy"])] = row
    records = []
    with open(os.path.join(output_dir, RESULTS_FILE), "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            timing = runtimes.get((row["scenario"], row["policy"]), {})
            records.append(
                RunRecord(
                    scenario=row["scenario"],
                    policy=row["policy"],
                    status=row["status"],
                    failure_period=row["failure_period"],
                    failure_reason=row["failure_reason"],
                    initial_value=row["initial_value"],
                    terminal_value=row["terminal_value"],
                    percent_change=row["percent_change"],
                    trades=row["trades"],
                    fees=row["fees"],
                    mean_forecast_mape=row["mean_forecast_mape"],
                    total_solve_seconds=timing.get("total_solve_seconds", 0.0),
                    period_solve_seconds=tuple(timing.get("period_solve_seconds", ())),
                )
            )
    return tuple(records)


def _metric_values(records, metric):
    """Per-policy metric samples over successful runs.  The runtime metric
    flattens to per-solve seconds; the others are one value per run."""
    per_policy: dict[str, list[float]] = {}
    for rec in records:
        if not rec.succeeded:
            continue
        bucket = per_policy.setdefault(rec.policy, [])
        if metric == METRIC_PERCENT_CHANGE:
            bucket.append(float(rec.percent_change))
        elif metric == METRIC_TRADES:
            bucket.append(float(rec.trades))
        elif metric == METRIC_FEES:
            bucket.append(float(rec.fees))
        elif metric == METRIC_RUNTIME:
            bucket.extend(s for s in rec.period_solve_seconds if s > 0.0)
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return per_policy


@dataclass(frozen=True, slots=True)
class SummaryStats:
    mean: float
    std_dev: float
    median: float
    maximum: float
    minimum: float
    count: int


@dataclass(frozen=True, slots=True)
class SummaryTable:
    metric: str
    rows: dict[str, SummaryStats]

    COLUMNS = ("mean", "std_dev", "median", "max", "min")


def summarize(records, metric: str) -> SummaryTable:
    """Five-statistic summary per policy: mean, sample std dev (n-1; zero for
    a single observation), midpoint median, max, min.  Policies with no
    successful runs are omitted with a warning."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    per_policy = _metric_values(records, metric)
    seen_policies = {rec.policy for rec in records}
    rows: dict[str, SummaryStats] = {}
    for policy in sorted(seen_policies):
        values = per_policy.get(policy, [])
        if not values:
            warnings.warn(f"policy {policy!r} has no successful runs; omitted", stacklevel=2)
            continue
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        rows[policy] = SummaryStats(
            mean=float(arr.mean()),
            std_dev=std,
            median=float(np.median(arr)),
            maximum=float(arr.max()),
            minimum=float(arr.min()),
            count=int(arr.size),
        )
    return SummaryTable(metric=metric, rows=rows)


@dataclass(frozen=True, slots=True)
class WinLossTie:
    """Pairwise comparison counts: entry[row][col] = (row wins, row losses,
    ties) over the scenarios both policies completed."""

    metric: str
    tie_tolerance: float
    policies: tuple[str, ...]
    entries: dict[str, dict[str, tuple[int, int, int]]]


def win_loss_tie(
    records,
    metric: str = METRIC_PERCENT_CHANGE,
    tie_tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> WinLossTie:
    """Per-scenario pairwise comparison.  The row policy wins where its
    metric exceeds the column policy's by more than the tie tolerance."""
    if metric == METRIC_RUNTIME:
        raise ValueError("win/loss/tie is defined over per-run metrics, not runtime")
    by_policy: dict[str, dict[str, float]] = {}
    for rec in records:
        if not rec.succeeded:
            continue
        value = {
            METRIC_PERCENT_CHANGE: rec.percent_change,
            METRIC_TRADES: float(rec.trades),
            METRIC_FEES: float(rec.fees),
        }[metric]
        by_policy.setdefault(rec.policy, {})[rec.scenario] = float(value)
    policies = tuple(sorted(by_policy))
    entries: dict[str, dict[str, tuple[int, int, int]]] = {}
    for a in policies:
        entries[a] = {}
        for b in policies:
            shared = sorted(set(by_policy[a]) & set(by_policy[b]))
            if not shared:
                raise ValueError(f"policies {a!r} and {b!r} share no completed scenarios")
            wins = losses = ties = 0
            for scenario in shared:
                diff = by_policy[a][scenario] - by_policy[b][scenario]
                if math.isclose(diff, 0.0, abs_tol=tie_tolerance) or abs(diff) <= tie_tolerance:
                    ties += 1
                elif diff > 0:
                    wins += 1
                else:
                    losses += 1
            entries[a][b] = (wins, losses, ties)
    return WinLossTie(
        metric=metric, tie_tolerance=tie_tolerance, policies=policies, entries=entries
    )
