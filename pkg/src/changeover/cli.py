"""Command-line interface.

Subcommands:

* ``gen-scenarios`` — draw randomized scenarios from a price CSV (or a
  synthetic random-walk panel, which is also written out as a CSV so later
  commands replay the exact same data).
* ``run`` — run a policy roster over a scenario file and persist the raw
  results store.
* ``report`` — render summary tables, the win/loss/tie matrix, and figures
  from a results store.
* ``oracle-check`` — the brute-force equivalence suite: random small
  instances solved by every policy MILP and by exhaustive search.
"""

from __future__ import annotations

import argparse
import os
import sys

from .data_ingest import (
    GenerationParams,
    generate_scenario,
    load_prices,
    load_scenarios,
    save_prices,
    save_scenarios,
    synthetic_history,
)
from .experiments import (
    ExperimentSuite,
    load_records,
    policy_from_name,
    run_suite,
    summarize,
)
from .forecasting import DEFAULT_MAPE_THRESHOLD, ForecastConfig
from .formulations import PolicyConfig
from .solver import SolveSettings

_DEFAULT_POLICIES = "Naive,Directional,DirP_25,DirP_500"


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gap", type=float, default=1e-6, help="relative MIP gap tolerance")
    parser.add_argument("--time-limit", type=float, default=60.0, help="seconds per solve")
    parser.add_argument(
        "--backend",
        choices=("highs", "branch-and-bound"),
        default="highs",
        help="MILP backend (branch-and-bound is the slow built-in)",
    )
    parser.add_argument("--seed", type=int, default=0, help="random seed")


def _cmd_gen_scenarios(args) -> int:
    if args.history:
        history = load_prices(args.history)
    else:
        n_assets, n_periods = (int(x) for x in args.synthetic.split(","))
        history = synthetic_history(n_assets, n_periods, seed=args.seed)
        csv_path = os.path.join(os.path.dirname(os.path.abspath(args.out)) or ".", "prices.csv")
        save_prices(history, csv_path)
        print(f"wrote synthetic history: {csv_path}")
    params = GenerationParams(
        n_assets_range=(args.min_assets, args.max_assets),
        horizon=args.horizon,
        fee_choices=tuple(int(f) for f in args.fees.split(",")),
        budget_range=(args.min_budget, args.max_budget),
        lookback=args.lookback,
        shared_budget=args.shared_budget,
    )
    specs = []
    for i in range(args.count):
        spec, _ = generate_scenario(
            history, params, seed=args.seed + i, name=f"scenario-{i:04d}"
        )
        specs.append(spec)
    save_scenarios(args.out, specs)
    print(f"wrote {len(specs)} scenarios: {args.out}")
    return 0


def _cmd_run(args) -> int:
    history = load_prices(args.history)
    scenarios = load_scenarios(args.scenarios)
    policies = []
    for name in args.policies.split(","):
        name = name.strip()
        if not name:
            continue
        if name == "Penalized":
            policies.append((name, PolicyConfig(kind="penalized", penalty=args.penalty)))
        else:
            policies.append((name, policy_from_name(name)))
    suite = ExperimentSuite(
        scenarios=tuple(scenarios),
        policies=tuple(policies),
        output_dir=args.out,
        forecaster=ForecastConfig(method=args.forecaster, lookback=args.lookback),
        settings=SolveSettings(
            gap_tolerance=args.gap,
            time_limit=args.time_limit,
            seed=args.seed,
            backend=args.backend,
        ),
        mape_threshold=args.mape_threshold,
        jobs=args.jobs,
    )
    outcome = run_suite(suite, history)
    ok = sum(1 for r in outcome.records if r.succeeded)
    print(
        f"ran {len(outcome.records)} scenario-policy pairs "
        f"({ok} succeeded, {len(outcome.exclusions)} scenario(s) excluded by MAPE)"
    )
    table = summarize(outcome.records, "percent_change") if ok else None
    if table and table.rows:
        print(f"{'policy':<14}{'mean':>10}{'std':>10}{'median':>10}{'max':>10}{'min':>10}")
        for policy, s in sorted(table.rows.items()):
            print(
                f"{policy:<14}{s.mean:>10.3f}{s.std_dev:>10.3f}"
                f"{s.median:>10.3f}{s.maximum:>10.3f}{s.minimum:>10.3f}"
            )
    print(f"raw store: {args.out}")
    return 0


def _cmd_report(args) -> int:
    from .reporting import emit_report

    records = load_records(args.results)
    paths = emit_report(
        records, args.out, baseline=args.baseline, tie_tolerance=args.tie_tolerance
    )
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_oracle_check(args) -> int:
    import numpy as np

    from .solver import SolveSettings as _Settings
    from .verification import check_policy_instance, sample_oracle_instance

    rng = np.random.default_rng(args.seed)
    settings = _Settings(
        gap_tolerance=args.gap, time_limit=args.time_limit, backend=args.backend
    )
    failures = 0
    for i in range(args.count):
        instance = sample_oracle_instance(
            rng, max_assets=args.max_assets, max_periods=args.max_periods
        )
        report = check_policy_instance(instance, settings=settings)
        status = "ok" if not report["failures"] else "FAIL"
        if report["failures"]:
            failures += 1
            detail = "; ".join(report["failures"])
            print(f"[{i + 1}/{args.count}] {status}: {detail}")
        elif args.verbose:
            print(
                f"[{i + 1}/{args.count}] {status} "
                f"(N={report['n_assets']}, T={report['horizon']}, base={report['base'][0]})"
            )
    print(f"oracle-check: {args.count - failures}/{args.count} instances agree")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="changeover",
        description="Multi-period portfolio changeover: policies, simulation, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-scenarios", help="draw randomized scenarios from a price history")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--history", help="price CSV (date,SYM1,...)")
    source.add_argument(
        "--synthetic",
        metavar="ASSETS,PERIODS",
        help="generate a synthetic history instead (also written as prices.csv)",
    )
    gen.add_argument("--count", type=int, default=30, help="number of scenarios")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--horizon", type=int, default=30)
    gen.add_argument("--min-assets", type=int, default=20)
    gen.add_argument("--max-assets", type=int, default=50)
    gen.add_argument(
        "--fees",
        default="200,300,400,500,600,700,800,900",
        help="comma-separated fee choices in cents",
    )
    gen.add_argument("--min-budget", type=int, default=1_500_000, help="cents")
    gen.add_argument("--max-budget", type=int, default=35_000_000, help="cents")
    gen.add_argument("--lookback", type=int, default=48)
    gen.add_argument(
        "--shared-budget",
        action="store_true",
        help="target budget equals the initial budget instead of an independent draw",
    )
    gen.add_argument("--out", required=True, help="scenario file to write (JSON lines)")
    gen.set_defaults(func=_cmd_gen_scenarios)

    runp = sub.add_parser("run", help="run a policy roster over a scenario file")
    runp.add_argument("--history", required=True, help="price CSV")
    runp.add_argument("--scenarios", required=True, help="scenario file from gen-scenarios")
    runp.add_argument("--out", required=True, help="output directory for the raw store")
    runp.add_argument(
        "--policies",
        default=_DEFAULT_POLICIES,
        help="comma-separated roster names (Naive, Base, Directional, DirP_<pct>, "
        "Penalized, ColGen_True, ColGen_False)",
    )
    runp.add_argument(
        "--forecaster",
        choices=("persistence", "drift", "oracle"),
        default="persistence",
    )
    runp.add_argument("--lookback", type=int, default=48)
    runp.add_argument(
        "--lambda",
        dest="penalty",
        type=float,
        default=0.25,
        help="penalty strength for the generic 'Penalized' roster name",
    )
    runp.add_argument(
        "--mape-threshold",
        type=float,
        default=DEFAULT_MAPE_THRESHOLD,
        help="exclude scenarios whose mean forecast MAPE exceeds this percentage",
    )
    runp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    _add_solver_flags(runp)
    runp.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="render tables and figures from a results store")
    rep.add_argument("--results", required=True, help="directory written by `run`")
    rep.add_argument("--out", required=True, help="report output directory")
    rep.add_argument("--baseline", default="Naive")
    rep.add_argument("--tie-tolerance", type=float, default=0.005)
    rep.set_defaults(func=_cmd_report)

    chk = sub.add_parser(
        "oracle-check", help="brute-force equivalence suite over random small instances"
    )
    chk.add_argument("--count", type=int, default=200)
    chk.add_argument("--max-assets", type=int, default=3)
    chk.add_argument("--max-periods", type=int, default=4)
    chk.add_argument("--verbose", action="store_true")
    _add_solver_flags(chk)
    chk.set_defaults(func=_cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
