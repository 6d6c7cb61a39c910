"""Command-line entry point.

Subcommands: ``heuristic`` (benchmark base-stock levels), ``train``
(train one model and save a checkpoint), ``evaluate`` (score a saved
checkpoint), ``policy-map`` (record the IP-to-order relation of a
policy), and ``grid`` (run a trial grid and export CSV reports).

Failures print a machine-readable JSON error record to stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .network import NAMED_SCENARIOS, ScenarioConfig, build_scenario, load_scenario
from .pmf import load_demand_csv


def _load_scenario_arg(args) -> ScenarioConfig:
    data = load_demand_csv(args.data) if getattr(args, "data", None) else None
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return load_scenario(fh.read(), data)
    if not args.scenario:
        raise ValueError("either --scenario or --config is required")
    return build_scenario(args.scenario, data)


def _cmd_heuristic(args) -> int:
    from .heuristic import da_heuristic

    scenario = _load_scenario_arg(args)
    result = da_heuristic(scenario, evaluate=not args.no_eval)
    payload = {
        "scenario": scenario.scenario_id,
        "base_stock_levels": result.bsl,
        "expected_backorders": {p: round(v, 6) for p, v in result.expected_backorders.items()},
        "benchmark_cost": result.benchmark_cost,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_train(args) -> int:
    from .experiments import export_report, run_trial, save_checkpoint

    scenario = _load_scenario_arg(args)
    result = run_trial(
        scenario, args.model, replicate=args.replicate, base_seed=args.seed,
        episodes=args.episodes,
    )
    if args.out:
        save_checkpoint(args.out, result)
    print(json.dumps({
        "scenario": result.scenario_id, "model": result.model,
        "cost": result.cost, "benchmark_cost": result.benchmark_cost,
        "savings": result.savings, "diverged": result.diverged,
        "checkpoint": args.out,
    }, indent=2))
    return 0


def _cmd_evaluate(args) -> int:
    from .experiments import load_checkpoint, make_policy
    from .simulator import evaluate_policy

    meta, params = load_checkpoint(args.checkpoint)
    data = load_demand_csv(args.data) if args.data else None
    scenario = build_scenario(meta["scenario_id"], data)
    bsl = {p: int(v) for p, v in meta["bsl"].items()}
    scenario = scenario.with_bsl(bsl)
    policy = make_policy(meta["model"], params, scenario, bsl)
    cost, per_episode = evaluate_policy(policy, scenario, bsl, seed=args.seed)
    print(json.dumps({
        "scenario": meta["scenario_id"], "model": meta["model"],
        "cost": cost, "episodes": per_episode.size,
        "std_cost": float(per_episode.std()),
    }, indent=2))
    return 0


def _cmd_policy_map(args) -> int:
    import csv

    from .experiments import load_checkpoint, make_policy, policy_map
    from .heuristic import da_heuristic

    data = load_demand_csv(args.data) if args.data else None
    if args.checkpoint:
        meta, params = load_checkpoint(args.checkpoint)
        scenario = build_scenario(meta["scenario_id"], data)
        bsl = {p: int(v) for p, v in meta["bsl"].items()}
        model = meta["model"]
    else:
        scenario = _load_scenario_arg(args)
        bsl = da_heuristic(scenario, evaluate=False).bsl
        params, model = None, "heuristic"
    scenario = scenario.with_bsl(bsl)
    policy = make_policy(model, params, scenario, bsl)
    rows = policy_map(policy, scenario, bsl, periods=args.periods, seed=args.seed)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["stock_point", "ip", "order", "count"])
        writer.writeheader()
        writer.writerows(rows)
    print(json.dumps({"scenario": scenario.scenario_id, "model": model,
                      "rows": len(rows), "out": args.out}, indent=2))
    return 0


def _cmd_grid(args) -> int:
    from .experiments import export_report, run_grid

    data = load_demand_csv(args.data) if args.data else None
    scenarios = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    trials = run_grid(
        scenarios, models, replicates=args.seeds, base_seed=args.seed,
        data_source=data, episodes=args.episodes,
    )
    export_report(args.out, trials)
    failed = [t for t in trials if not t.ok]
    print(json.dumps({
        "trials": len(trials), "failed": len(failed), "out": args.out,
        "errors": [{"scenario": t.scenario_id, "model": t.model,
                    "replicate": t.replicate, "error": t.error} for t in failed],
    }, indent=2))
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meiolab",
        description="Multi-echelon inventory optimization laboratory",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, require_model=False):
        p.add_argument("--scenario", help=f"named scenario, one of {', '.join(NAMED_SCENARIOS)}")
        p.add_argument("--config", help="custom scenario YAML file")
        p.add_argument("--data", help="empirical demand CSV (required by *2/*4 scenarios)")
        if require_model:
            p.add_argument("--model", required=True,
                           choices=["sarl", "marl", "imarl"],
                           help="training algorithm")

    p = sub.add_parser("heuristic", help="compute benchmark base-stock levels")
    scenario_args(p)
    p.add_argument("--no-eval", action="store_true", help="skip the simulated benchmark cost")
    p.add_argument("--out", help="write the JSON result to this file")
    p.set_defaults(func=_cmd_heuristic)

    p = sub.add_parser("train", help="train a policy and save a checkpoint")
    scenario_args(p, require_model=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--episodes", type=int, help="override the training episode budget")
    p.add_argument("--out", help="checkpoint path (.npz)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="empirical demand CSV for *2/*4 scenarios")
    p.add_argument("--seed", type=int, default=10_000)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("policy-map", help="record a policy's IP-to-order relation")
    scenario_args(p)
    p.add_argument("--checkpoint", help="trained checkpoint; omitted = benchmark policy")
    p.add_argument("--periods", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_policy_map)

    p = sub.add_parser("grid", help="run a trial grid and export CSV reports")
    p.add_argument("--scenarios", required=True, help="comma-separated scenario ids")
    p.add_argument("--models", required=True,
                   help="comma-separated models (heuristic, random, sarl, marl, imarl)")
    p.add_argument("--seeds", type=int, default=1, help="replicates per cell")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--episodes", type=int, help="override the training episode budget")
    p.add_argument("--data", help="empirical demand CSV")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as err:  # noqa: BLE001 - single CLI error boundary
        record = {"error": type(err).__name__, "message": str(err),
                  "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
