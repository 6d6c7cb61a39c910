"""
Inside the supply-chain simulator
=================================

Each period advances through three events: receive shipments, serve
backlog and last period's orders (scarce stock goes to the customers
with the lowest inventory position first), then place new orders while
fresh demand lands at the retailers.  The environment is vectorized: a
batch of independent trajectories advances in lockstep, which is what
makes policy training and evaluation cheap.
"""

import numpy as np

from meiolab import build_scenario, da_heuristic
from meiolab.heuristic import base_stock_policy
from meiolab.simulator import InventoryEnv, evaluate_policy

scenario = build_scenario("A1")
heur = da_heuristic(scenario, evaluate=False)
scenario = scenario.with_bsl(heur.bsl)

# Follow one trajectory under the benchmark order-up-to policy.
env = InventoryEnv(scenario, heur.bsl, batch=1, seed=7)
obs = env.reset(7)
policy = base_stock_policy(heur.bsl, scenario)
print("period  on-hand (w1,r1,r2,r3)   IP              cost")
for t in range(10):
    obs, reward, info = env.step(policy(obs))
    print(f"{info['period']:>6}  {env.on_hand[0]}   "
          f"{obs.ip[0]}  {info['cost'][0]:8.1f}")

# Stock is conserved: everything on hand or in a pipeline equals the
# initial stock plus what external suppliers injected minus what was
# delivered to external customers.
total = env.total_stock()[0]
start = heur.bsl["w1"] + heur.bsl["r1"] + heur.bsl["r2"] + heur.bsl["r3"]
print(f"\nconservation: {total} == {start} + {env.cum_injected[0]} "
      f"- {env.cum_served_external[0]} -> "
      f"{total == start + env.cum_injected[0] - env.cum_served_external[0]}")

# Evaluation runs a whole batch of episodes in one sweep and scores the
# periods after a warm-up window; identical seeds give identical costs.
cost_a, _ = evaluate_policy(policy, scenario, heur.bsl, seed=10_000)
cost_b, _ = evaluate_policy(policy, scenario, heur.bsl, seed=10_000)
print(f"benchmark cost: {cost_a:.2f} (reproducible: {cost_a == cost_b})")

# A policy ordering nothing starves the retailers; one ordering the
# maximum floods the warehouse.  Both are far worse than order-up-to.
never = lambda obs: np.full_like(obs.scaled, -1.0)
always = lambda obs: np.full_like(obs.scaled, 1.0)
print(f"order-nothing cost: {evaluate_policy(never, scenario, heur.bsl, seed=10_000)[0]:.0f}")
print(f"order-maximum cost: {evaluate_policy(always, scenario, heur.bsl, seed=10_000)[0]:.0f}")
