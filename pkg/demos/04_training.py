"""
Training policies against the benchmark
=======================================

Three trainers share one numpy actor-critic stack with exact manual
gradients:

* single-agent -- one central policy sees every inventory position;
* multi-agent -- one small actor per stock point (retailers share one)
  with a centralized critic;
* iterative multi-agent -- agents train one at a time against frozen
  peers, and a candidate is accepted only when the common-random-number
  ensemble evaluation improves.

This demo runs short budgets so it finishes in about a minute; real
experiments use the per-scenario budgets in ``TrainConfig.for_model``.
"""

from dataclasses import replace

from meiolab import build_scenario, da_heuristic, train_mappo, train_imarl
from meiolab.ppo import TrainConfig

scenario = build_scenario("A1")
heur = da_heuristic(scenario, evaluate=True, eval_seed=10_000)
scenario = scenario.with_bsl(heur.bsl)
print(f"benchmark cost: {heur.benchmark_cost:.1f}")

# Multi-agent training: evaluation snapshots land every 100 episodes,
# and the returned parameters are the best snapshot, not the last one.
cfg = replace(TrainConfig().for_model("marl", "A1"), training_episodes=800)
res = train_mappo(scenario, heur.bsl, cfg, seed=0)
print("\nmulti-agent learning curve (episodes, cost):")
for pt in res.curve:
    print(f"  {pt.episode:>5}  {pt.mean_cost:10.1f}")
print(f"best cost {res.best_cost:.1f} "
      f"({res.best_cost / heur.benchmark_cost:.2f}x benchmark)")

# Iterative training starts from the benchmark policy, so its first
# evaluation equals the benchmark cost exactly, and acceptance gating
# guarantees the final ensemble never does worse.
cfg = replace(TrainConfig().for_model("imarl", "A1"), training_episodes=200)
res = train_imarl(scenario, heur.bsl, cfg, seed=0)
print(f"\niterative ensemble: start {res.curve[0].mean_cost:.1f}, "
      f"final {res.best_cost:.1f}, converged={res.extra['converged']}")
for entry in res.extra["iteration_log"]:
    print(f"  trained {entry['agent']:>3} (iteration {entry['iteration']}): "
          f"candidate {entry['best_cost']:.1f} vs saved {entry['saved_cost']:.1f} "
          f"-> {'accepted' if entry['accepted'] else 'rejected'}")
