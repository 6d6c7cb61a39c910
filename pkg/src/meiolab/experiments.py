"""Experiment orchestration: seeded trials, grids, reports, checkpoints.

A *trial* is one (scenario, model, seed) run: build the scenario, compute
the benchmark base-stock levels, train (or not, for the benchmark and
random baselines), and evaluate.  A *grid* is the cross product of
scenarios, models, and seeds, with per-trial failure isolation and CSV
reports of best/mean costs and savings versus the benchmark.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .heuristic import base_stock_policy, da_heuristic
from .network import ScenarioConfig, build_scenario
from .ppo import TrainConfig
from .simulator import InventoryEnv, evaluate_policy
from .training import (
    CurvePoint,
    ImarlAgent,
    TrainResult,
    imarl_ensemble_policy,
    mappo_policy,
    sarl_policy,
    train_imarl,
    train_mappo,
    train_sarl,
)

log = logging.getLogger(__name__)

MODELS = ("heuristic", "random", "sarl", "marl", "imarl")


def trial_seed(base_seed: int, scenario_id: str, model: str, replicate: int) -> int:
    """Stable per-trial seed derived by hashing the trial coordinates."""
    key = f"{base_seed}|{scenario_id}|{model}|{replicate}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


@dataclass
class TrialResult:
    scenario_id: str
    model: str
    replicate: int
    seed: int
    cost: float = float("nan")
    benchmark_cost: float = float("nan")
    savings: float = float("nan")
    bsl: dict[str, int] = field(default_factory=dict)
    curve: list[CurvePoint] = field(default_factory=list)
    diverged: bool = False
    error: str | None = None
    params: dict | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None


def random_policy(seed: int):
    rng = np.random.default_rng(seed)

    def policy(obs):
        return rng.uniform(-1.0, 1.0, size=obs.scaled.shape)

    return policy


def make_policy(model: str, params: dict | None, scenario: ScenarioConfig,
                bsl: dict[str, int], seed: int = 0):
    """Deterministic policy closure for a trained or baseline model."""
    if model == "heuristic":
        return base_stock_policy(bsl, scenario)
    if model == "random":
        return random_policy(seed)
    if model == "sarl":
        return sarl_policy(params["actor"])
    if model == "marl":
        return mappo_policy(scenario, params)
    if model == "imarl":
        agents = {
            p: ImarlAgent(
                node=p,
                obs_idx=np.asarray(a["obs_idx"], dtype=np.int64),
                scope_idx=np.asarray(a["obs_idx"], dtype=np.int64),
                actor=a["actor"],
                critic={},
                trained=bool(a["trained"]),
            )
            for p, a in params["agents"].items()
        }
        return imarl_ensemble_policy(scenario, bsl, agents, params.get("init", "heuristic"))
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def run_trial(scenario: str | ScenarioConfig, model: str, replicate: int = 0,
              base_seed: int = 0, data_source: dict | None = None,
              episodes: int | None = None, cfg: TrainConfig | None = None,
              eval_seed: int = 10_000) -> TrialResult:
    """Run one (scenario, model, seed) experiment end to end."""
    if isinstance(scenario, str):
        scenario = build_scenario(scenario, data_source)
    sid = scenario.scenario_id
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    seed = trial_seed(base_seed, sid, model, replicate)
    result = TrialResult(scenario_id=sid, model=model, replicate=replicate, seed=seed)

    heur = da_heuristic(scenario, evaluate=True, eval_seed=eval_seed)
    result.bsl = heur.bsl
    result.benchmark_cost = heur.benchmark_cost
    scenario = scenario.with_bsl(heur.bsl)

    if model == "heuristic":
        cost, per_ep = evaluate_policy(
            base_stock_policy(heur.bsl, scenario), scenario, heur.bsl, seed=eval_seed
        )
        result.cost = cost
        result.curve = [CurvePoint(0, cost, float(per_ep.std()))]
    elif model == "random":
        cost, per_ep = evaluate_policy(
            random_policy(seed), scenario, heur.bsl, seed=eval_seed
        )
        result.cost = cost
        result.curve = [CurvePoint(0, cost, float(per_ep.std()))]
    else:
        cfg = (cfg or TrainConfig()).for_model(model, sid)
        if episodes is not None:
            cfg = replace(cfg, training_episodes=int(episodes))
        trainer = {"sarl": train_sarl, "marl": train_mappo, "imarl": train_imarl}[model]
        trained: TrainResult = trainer(scenario, heur.bsl, cfg, seed, eval_seed=eval_seed)
        result.cost = trained.best_cost
        result.curve = trained.curve
        result.diverged = trained.diverged
        result.params = trained.params
    result.savings = (result.benchmark_cost - result.cost) / result.benchmark_cost
    return result


def run_grid(scenarios, models, replicates: int = 1, base_seed: int = 0,
             data_source: dict | None = None, episodes: int | None = None,
             cfg: TrainConfig | None = None) -> list[TrialResult]:
    """Cross product of scenarios x models x seeds; a failing trial is
    recorded with its error message and does not stop the grid."""
    results = []
    for sid in scenarios:
        for model in models:
            for rep in range(replicates):
                try:
                    results.append(run_trial(
                        sid, model, rep, base_seed, data_source, episodes, cfg
                    ))
                except Exception as err:  # noqa: BLE001 - isolation by design
                    log.exception("trial (%s, %s, %d) failed", sid, model, rep)
                    results.append(TrialResult(
                        scenario_id=sid if isinstance(sid, str) else sid.scenario_id,
                        model=model, replicate=rep,
                        seed=trial_seed(base_seed, str(sid), model, rep),
                        error=f"{type(err).__name__}: {err}",
                    ))
    return results


# -- policy maps ---------------------------------------------------------

def policy_map(policy, scenario: ScenarioConfig, bsl: dict[str, int],
               periods: int = 100_000, seed: int = 0) -> list[dict]:
    """Record the (inventory position -> order quantity) relation a
    deterministic policy realizes over a long simulated run.

    Returns one row per (stock point, observed IP, order) with its
    visit count.
    """
    env = InventoryEnv(scenario, bsl, batch=1, seed=seed)
    obs = env.reset(seed)
    counts: dict[tuple[str, int, int], int] = {}
    for _ in range(periods):
        actions = policy(obs)
        next_obs, _, info = env.step(actions)
        for i, p in enumerate(env.nodes):
            key = (p, int(obs.ip[0, i]), int(info["orders"][0, i]))
            counts[key] = counts.get(key, 0) + 1
        obs = next_obs
    rows = [
        {"stock_point": p, "ip": ip, "order": order, "count": c}
        for (p, ip, order), c in sorted(counts.items())
    ]
    return rows


# -- reports -------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def export_report(out_dir, trials: list[TrialResult]) -> None:
    """Write trials.csv, grid_best.csv, grid_mean.csv, per-trial learning
    curves, and a README describing every column."""
    os.makedirs(out_dir, exist_ok=True)
    curves_dir = os.path.join(out_dir, "curves")
    os.makedirs(curves_dir, exist_ok=True)

    _write_csv(
        os.path.join(out_dir, "trials.csv"),
        ["scenario", "model", "replicate", "seed", "cost", "benchmark_cost",
         "savings", "diverged", "error"],
        [[t.scenario_id, t.model, t.replicate, t.seed,
          f"{t.cost:.4f}", f"{t.benchmark_cost:.4f}", f"{t.savings:.6f}",
          int(t.diverged), t.error or ""] for t in trials],
    )

    groups: dict[tuple[str, str], list[TrialResult]] = {}
    for t in trials:
        groups.setdefault((t.scenario_id, t.model), []).append(t)

    best_rows, mean_rows = [], []
    for (sid, model), ts in sorted(groups.items()):
        ok = [t for t in ts if t.ok]
        if not ok:
            best_rows.append([sid, model, "", "", "", len(ts)])
            mean_rows.append([sid, model, "", "", "", "", 0, len(ts)])
            continue
        best = min(ok, key=lambda t: t.cost)
        best_rows.append([
            sid, model, f"{best.cost:.4f}", f"{best.savings:.6f}",
            best.replicate, len(ts) - len(ok),
        ])
        costs = np.array([t.cost for t in ok])
        savings = np.array([t.savings for t in ok])
        mean_rows.append([
            sid, model, f"{costs.mean():.4f}", f"{costs.std():.4f}",
            f"{savings.mean():.6f}", f"{savings.std():.6f}",
            len(ok), len(ts) - len(ok),
        ])
    _write_csv(
        os.path.join(out_dir, "grid_best.csv"),
        ["scenario", "model", "best_cost", "best_savings", "best_replicate", "failed"],
        best_rows,
    )
    _write_csv(
        os.path.join(out_dir, "grid_mean.csv"),
        ["scenario", "model", "mean_cost", "std_cost", "mean_savings",
         "std_savings", "trials", "failed"],
        mean_rows,
    )

    for t in trials:
        if not t.curve:
            continue
        _write_csv(
            os.path.join(curves_dir, f"{t.scenario_id}_{t.model}_{t.replicate}.csv"),
            ["episode", "mean_cost", "std_cost"],
            [[pt.episode, f"{pt.mean_cost:.4f}", f"{pt.std_cost:.4f}"]
             for pt in t.curve],
        )

    with open(os.path.join(out_dir, "README.md"), "w") as fh:
        fh.write(_REPORT_README)


_REPORT_README = """\
# Experiment report

- `trials.csv` - one row per (scenario, model, replicate): evaluation
  `cost`, the heuristic `benchmark_cost` on the same scenario,
  `savings` = (benchmark - cost) / benchmark, a `diverged` flag, and the
  error message when the trial failed.
- `grid_best.csv` - per (scenario, model): lowest cost over replicates,
  its savings, which replicate achieved it, and how many trials failed.
- `grid_mean.csv` - per (scenario, model): mean/std of cost and savings
  over successful replicates.
- `curves/<scenario>_<model>_<replicate>.csv` - learning curve samples:
  nominal training `episode` count, evaluation `mean_cost`, and the
  standard deviation over evaluation episodes.

Costs are unscaled per-episode sums over the scored evaluation window.
"""


# -- checkpoints ---------------------------------------------------------

CHECKPOINT_VERSION = 1


def _flatten_params(obj, prefix, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten_params(v, f"{prefix}{k}/", out)
    elif isinstance(obj, np.ndarray):
        out[prefix[:-1]] = obj
    elif isinstance(obj, (bool, int, float, str)):
        out[prefix[:-1]] = np.array(obj)
    else:
        raise TypeError(f"cannot checkpoint value of type {type(obj)} at {prefix}")


def _unflatten_params(flat: dict) -> dict:
    root: dict = {}
    for key, value in flat.items():
        parts = key.split("/")
        node = root
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        if value.ndim == 0 and value.dtype.kind in "Ub":
            value = value.item()
        node[parts[-1]] = value
    return root


def save_checkpoint(path, result: TrialResult) -> None:
    """Persist a trained policy with enough metadata to rebuild it."""
    if result.params is None:
        raise ValueError(f"trial ({result.scenario_id}, {result.model}) has no parameters")
    flat = {}
    _flatten_params(result.params, "params/", flat)
    meta = {
        "version": CHECKPOINT_VERSION,
        "scenario_id": result.scenario_id,
        "model": result.model,
        "replicate": result.replicate,
        "seed": result.seed,
        "cost": result.cost,
        "benchmark_cost": result.benchmark_cost,
        "bsl": result.bsl,
    }
    flat["meta"] = np.array(json.dumps(meta))
    np.savez(path, **flat)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (meta, params) from a saved checkpoint."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        flat = {k: data[k] for k in data.files if k != "meta"}
    nested = _unflatten_params(flat)
    return meta, nested.get("params", {})
