"""Policy training: single-agent, multi-agent, and iterative multi-agent.

All three trainers share the same machinery: vectorized rollouts from
:class:`InventoryEnv`, generalized advantage estimation with truncation
bootstraps (episodes are artificial windows on an infinite-horizon
objective), and clipped-surrogate updates with exact numpy gradients.

* ``train_sarl`` - one central agent observes every scaled inventory
  position and orders for every stock point.
* ``train_mappo`` - one agent per stock point; retailer agents share a
  single actor, each warehouse has its own, and one centralized critic
  consumes the global observation with a value head per agent.
* ``train_imarl`` - agents are trained one at a time against frozen
  peers, accepting a new policy only when the common-random-number
  evaluation improves, and re-queuing network neighbors on acceptance.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .heuristic import base_stock_policy
from .network import ScenarioConfig
from .nets import Adam
from .ppo import (
    TrainConfig,
    TrainingDiverged,
    actor_critic_loss_and_grads,
    gae,
    joint_params,
    make_actor,
    make_critic,
    normalize_advantages,
    ppo_update,
)
from .simulator import InventoryEnv, evaluate_policy

log = logging.getLogger(__name__)


@dataclass
class CurvePoint:
    episode: int          # nominal episode count (multiples of the cadence)
    mean_cost: float      # unscaled evaluation cost
    std_cost: float


@dataclass
class TrainResult:
    model: str
    params: dict
    curve: list[CurvePoint]
    best_cost: float
    diverged: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def curve_costs(self) -> np.ndarray:
        return np.array([pt.mean_cost for pt in self.curve])


def _copy_tree(tree):
    if isinstance(tree, dict):
        return {k: _copy_tree(v) for k, v in tree.items()}
    if isinstance(tree, np.ndarray):
        return tree.copy()
    return tree


def _derive_seed(seed: int, label: str) -> int:
    import hashlib

    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def sarl_policy(actor):
    """Deterministic central policy: clamped actor mean on the global obs."""

    def policy(obs):
        mean, _ = nets.mlp_forward(actor["mlp"], obs.scaled)
        return np.clip(mean, -1.0, 1.0)

    return policy


def train_sarl(scenario: ScenarioConfig, bsl: dict[str, int], cfg: TrainConfig,
               seed: int, eval_seed: int = 10_000) -> TrainResult:
    """Train the central single-agent policy; returns the parameters of
    the best evaluation along with the full learning curve."""
    nodes = scenario.topology.stock_points
    n = len(nodes)
    rng = np.random.default_rng(_derive_seed(seed, "sarl"))
    env = InventoryEnv(scenario, bsl, batch=cfg.num_envs, seed=_derive_seed(seed, "sarl-env"))
    actor = make_actor(rng, n, n, cfg.hidden)
    critic = make_critic(rng, n, cfg.hidden)
    optimizer = Adam(joint_params(actor, critic), cfg.learning_rate)

    episode_length = scenario.episode_length
    B, T = cfg.num_envs, cfg.steps_per_env
    obs = env.reset()
    episodes_done = 0
    next_eval = cfg.eval_every_episodes
    curve: list[CurvePoint] = []
    best_cost = np.inf
    best_actor = _copy_tree(actor)
    diverged = False

    def run_eval(nominal):
        nonlocal best_cost, best_actor
        mean_cost, per_ep = evaluate_policy(
            sarl_policy(actor), scenario, bsl, seed=eval_seed
        )
        curve.append(CurvePoint(nominal, mean_cost, float(per_ep.std())))
        if mean_cost < best_cost:
            best_cost = mean_cost
            best_actor = _copy_tree(actor)

    while episodes_done < cfg.training_episodes:
        buf_obs = np.empty((T, B, n))
        buf_act = np.empty((T, B, n))
        buf_logp = np.empty((T, B))
        buf_rew = np.empty((T, B))
        buf_val = np.empty((T, B))
        buf_next = np.empty((T, B))
        buf_trunc = np.zeros((T, B), dtype=bool)
        for t in range(T):
            mean, _ = nets.mlp_forward(actor["mlp"], obs.scaled)
            action, pre, logp, _ = nets.gaussian_head(mean, actor["log_std"], rng)
            value, _ = nets.mlp_forward(critic, obs.scaled)
            buf_obs[t], buf_act[t], buf_logp[t], buf_val[t] = (
                obs.scaled, pre, logp, value[:, 0]
            )
            obs, reward, _ = env.step(action)
            buf_rew[t] = reward
            if env.t == episode_length:
                buf_trunc[t] = True
                tail, _ = nets.mlp_forward(critic, obs.scaled)
                buf_next[t] = tail[:, 0]
                obs = env.reset_episodes()
                episodes_done += B
        for t in range(T - 1):
            if not buf_trunc[t, 0]:
                buf_next[t] = buf_val[t + 1]
        if not buf_trunc[T - 1, 0]:
            tail, _ = nets.mlp_forward(critic, obs.scaled)
            buf_next[T - 1] = tail[:, 0]

        adv, ret = gae(buf_rew, buf_val, buf_next, buf_trunc, cfg.gamma, cfg.gae_lambda)
        batch = {
            "obs": buf_obs.reshape(T * B, n),
            "actions": buf_act.reshape(T * B, n),
            "logp_old": buf_logp.ravel(),
            "advantages": adv.ravel(),
            "returns": ret.ravel(),
            "values_old": buf_val.ravel(),
        }
        try:
            actor, critic, _ = ppo_update(actor, critic, batch, cfg, optimizer, rng)
        except TrainingDiverged as err:
            log.warning("training diverged after %d episodes: %s", episodes_done, err)
            diverged = True
            break
        while episodes_done >= next_eval:
            run_eval(next_eval)
            next_eval += cfg.eval_every_episodes

    if not curve:
        run_eval(episodes_done)
    return TrainResult("sarl", {"actor": best_actor}, curve, best_cost, diverged)


# -- MAPPO ----------------------------------------------------------------

def mappo_policy(scenario: ScenarioConfig, params):
    """Deterministic decentralized policy from MAPPO parameters."""
    topo = scenario.topology
    nodes = topo.stock_points
    retailer = [p in set(topo.retailers()) for p in nodes]

    def policy(obs):
        B = obs.scaled.shape[0]
        actions = np.empty((B, len(nodes)))
        for i, p in enumerate(nodes):
            actor = params["shared_actor"] if retailer[i] else params["actors"][p]
            mean, _ = nets.mlp_forward(actor["mlp"], obs.scaled[:, i : i + 1])
            actions[:, i] = np.clip(mean[:, 0], -1.0, 1.0)
        return actions

    return policy


def train_mappo(scenario: ScenarioConfig, bsl: dict[str, int], cfg: TrainConfig,
                seed: int, eval_seed: int = 10_000) -> TrainResult:
    """Multi-agent PPO with a shared retailer actor and a centralized
    critic; retailer agents earn their own stock point's cost, warehouse
    agents the total network reward."""
    topo = scenario.topology
    nodes = topo.stock_points
    n = len(nodes)
    retailer_mask = np.array([not topo.customers_of(p) for p in nodes])
    r_idx = np.nonzero(retailer_mask)[0]
    w_idx = np.nonzero(~retailer_mask)[0]

    rng = np.random.default_rng(_derive_seed(seed, "marl"))
    env = InventoryEnv(scenario, bsl, batch=cfg.num_envs, seed=_derive_seed(seed, "marl-env"))
    shared_actor = make_actor(rng, 1, 1, cfg.hidden)
    wh_actors = {nodes[i]: make_actor(rng, 1, 1, cfg.hidden) for i in w_idx}
    critic = make_critic(rng, n, cfg.hidden, out_dim=n)

    params_flat = {}

    def collect_params():
        out = {}
        for k, v in joint_params(shared_actor, {}).items():
            if k.startswith("actor/"):
                out[f"shared/{k[6:]}"] = v
        for i in w_idx:
            p = nodes[i]
            for k, v in joint_params(wh_actors[p], {}).items():
                if k.startswith("actor/"):
                    out[f"wh:{p}/{k[6:]}"] = v
        for k, v in critic.items():
            out[f"critic/{k}"] = v
        return out

    optimizer = Adam(collect_params(), cfg.learning_rate)

    episode_length = scenario.episode_length
    B, T = cfg.num_envs, cfg.steps_per_env
    obs = env.reset()
    episodes_done = 0
    next_eval = cfg.eval_every_episodes
    curve: list[CurvePoint] = []
    best_cost = np.inf
    best_params = None
    diverged = False

    def snapshot():
        return {
            "shared_actor": _copy_tree(shared_actor),
            "actors": {nodes[i]: _copy_tree(wh_actors[nodes[i]]) for i in w_idx},
        }

    def run_eval(nominal):
        nonlocal best_cost, best_params
        mean_cost, per_ep = evaluate_policy(
            mappo_policy(scenario, snapshot()), scenario, bsl, seed=eval_seed
        )
        curve.append(CurvePoint(nominal, mean_cost, float(per_ep.std())))
        if mean_cost < best_cost:
            best_cost = mean_cost
            best_params = snapshot()

    def agent_forward(i, x):
        actor = shared_actor if retailer_mask[i] else wh_actors[nodes[i]]
        mean, _ = nets.mlp_forward(actor["mlp"], x)
        return mean, actor["log_std"]

    while episodes_done < cfg.training_episodes:
        buf_obs = np.empty((T, B, n))
        buf_act = np.empty((T, B, n))
        buf_logp = np.empty((T, B, n))
        buf_rew = np.empty((T, B, n))
        buf_val = np.empty((T, B, n))
        buf_next = np.empty((T, B, n))
        buf_trunc = np.zeros((T, B), dtype=bool)
        for t in range(T):
            actions = np.empty((B, n))
            for i in range(n):
                x = obs.scaled[:, i : i + 1]
                mean, log_std = agent_forward(i, x)
                act, pre, logp, _ = nets.gaussian_head(mean, log_std, rng)
                actions[:, i] = act[:, 0]
                buf_act[t, :, i] = pre[:, 0]
                buf_logp[t, :, i] = logp
            values, _ = nets.mlp_forward(critic, obs.scaled)
            buf_obs[t], buf_val[t] = obs.scaled, values
            obs, reward, info = env.step(actions)
            per_node = -info["cost_per_node"] / 1000.0
            buf_rew[t][:, r_idx] = per_node[:, r_idx]
            buf_rew[t][:, w_idx] = reward[:, None]
            if env.t == episode_length:
                buf_trunc[t] = True
                tail, _ = nets.mlp_forward(critic, obs.scaled)
                buf_next[t] = tail
                obs = env.reset_episodes()
                episodes_done += B
        for t in range(T - 1):
            if not buf_trunc[t, 0]:
                buf_next[t] = buf_val[t + 1]
        if not buf_trunc[T - 1, 0]:
            tail, _ = nets.mlp_forward(critic, obs.scaled)
            buf_next[T - 1] = tail

        adv, ret = gae(
            buf_rew, buf_val, buf_next, buf_trunc[:, :, None], cfg.gamma, cfg.gae_lambda
        )
        # per-agent advantage normalization
        flat_adv = adv.reshape(T * B, n)
        flat_adv = (flat_adv - flat_adv.mean(axis=0)) / (flat_adv.std(axis=0) + 1e-8)
        flat = {
            "obs": buf_obs.reshape(T * B, n),
            "actions": buf_act.reshape(T * B, n),
            "logp_old": buf_logp.reshape(T * B, n),
            "advantages": flat_adv,
            "returns": ret.reshape(T * B, n),
            "values_old": buf_val.reshape(T * B, n),
        }
        try:
            shared_actor, wh_actors, critic = _mappo_update(
                flat, cfg, optimizer, rng, nodes, r_idx, w_idx,
                shared_actor, wh_actors, critic,
            )
        except TrainingDiverged as err:
            log.warning("training diverged after %d episodes: %s", episodes_done, err)
            diverged = True
            break
        while episodes_done >= next_eval:
            run_eval(next_eval)
            next_eval += cfg.eval_every_episodes

    if best_params is None:
        run_eval(episodes_done)
    return TrainResult("marl", best_params, curve, best_cost, diverged)


def _mappo_update(flat, cfg, optimizer, rng, nodes, r_idx, w_idx,
                  shared_actor, wh_actors, critic):
    from .ppo import policy_surrogate, value_objective

    N = flat["obs"].shape[0]
    mb = N // cfg.minibatches
    for _ in range(cfg.ppo_epochs):
        perm = rng.permutation(N)
        for k in range(cfg.minibatches):
            idx = perm[k * mb : (k + 1) * mb]
            grads = {}
            total_loss = 0.0

            def actor_pass(actor, cols, prefix):
                nonlocal total_loss
                xs = np.concatenate(
                    [flat["obs"][idx][:, i : i + 1] for i in cols], axis=0
                )
                acts = np.concatenate([flat["actions"][idx][:, i : i + 1] for i in cols])
                lps = np.concatenate([flat["logp_old"][idx][:, i] for i in cols])
                advs = np.concatenate([flat["advantages"][idx][:, i] for i in cols])
                mean, cache = nets.mlp_forward(actor["mlp"], xs)
                logp = nets.gaussian_logp(mean, actor["log_std"], acts)
                loss, dlogp = policy_surrogate(logp, lps, advs, cfg.clip)
                dmean, dls = nets.gaussian_logp_grads(mean, actor["log_std"], acts, dlogp)
                g, _ = nets.mlp_backward(actor["mlp"], cache, dmean)
                for k2, v in g.items():
                    grads[f"{prefix}/{k2}"] = v
                grads[f"{prefix}/log_std"] = dls - cfg.entropy_coef
                total_loss += loss

            actor_pass(shared_actor, list(r_idx), "shared")
            for i in w_idx:
                actor_pass(wh_actors[nodes[i]], [i], f"wh:{nodes[i]}")

            v, cache = nets.mlp_forward(critic, flat["obs"][idx])
            v_loss, dv = value_objective(
                v.ravel(), flat["values_old"][idx].ravel(),
                flat["returns"][idx].ravel(), cfg.clip,
            )
            cg, _ = nets.mlp_backward(
                critic, cache, cfg.value_coef * dv.reshape(v.shape)
            )
            for k2, g in cg.items():
                grads[f"critic/{k2}"] = g
            total_loss += cfg.value_coef * v_loss
            if not np.isfinite(total_loss):
                raise TrainingDiverged(f"non-finite MAPPO loss {total_loss}")

            grads = nets.clip_global_norm(grads, cfg.max_grad_norm)
            params = {}
            for k2, val in shared_actor["mlp"].items():
                params[f"shared/{k2}"] = val
            params["shared/log_std"] = shared_actor["log_std"]
            for i in w_idx:
                p = nodes[i]
                for k2, val in wh_actors[p]["mlp"].items():
                    params[f"wh:{p}/{k2}"] = val
                params[f"wh:{p}/log_std"] = wh_actors[p]["log_std"]
            for k2, val in critic.items():
                params[f"critic/{k2}"] = val
            params = optimizer.step(params, grads)
            shared_actor = {
                "mlp": {k2[7:]: v for k2, v in params.items()
                        if k2.startswith("shared/") and k2 != "shared/log_std"},
                "log_std": params["shared/log_std"],
            }
            wh_actors = {
                nodes[i]: {
                    "mlp": {
                        k2.split("/", 1)[1]: v for k2, v in params.items()
                        if k2.startswith(f"wh:{nodes[i]}/")
                        and not k2.endswith("log_std")
                    },
                    "log_std": params[f"wh:{nodes[i]}/log_std"],
                }
                for i in w_idx
            }
            critic = {k2[7:]: v for k2, v in params.items() if k2.startswith("critic/")}
    return shared_actor, wh_actors, critic


# -- IMARL ----------------------------------------------------------------

@dataclass
class ImarlAgent:
    node: str
    obs_idx: np.ndarray    # own + downstream descendant positions
    scope_idx: np.ndarray  # stock points whose costs the agent earns
    actor: dict
    critic: dict
    trained: bool = False


def _imarl_agents(scenario: ScenarioConfig, cfg: TrainConfig, rng) -> dict[str, ImarlAgent]:
    topo = scenario.topology
    nodes = list(topo.stock_points)
    agents = {}
    for p in nodes:
        scope = [p] + topo.descendants_of(p)
        idx = np.array(sorted(nodes.index(q) for q in scope), dtype=np.int64)
        agents[p] = ImarlAgent(
            node=p,
            obs_idx=idx,
            scope_idx=idx,
            actor=make_actor(rng, idx.size, 1, cfg.hidden),
            critic=make_critic(rng, idx.size, cfg.hidden),
        )
    return agents


def imarl_ensemble_policy(scenario: ScenarioConfig, bsl, agents: dict[str, ImarlAgent],
                          init: str, overrides: dict | None = None):
    """Deterministic joint policy: trained agents use their saved actor
    means, untrained agents the base policy (order-up-to for heuristic
    init, the initial network output otherwise)."""
    nodes = list(scenario.topology.stock_points)
    heuristic = base_stock_policy(bsl, scenario) if init == "heuristic" else None
    overrides = overrides or {}

    def policy(obs):
        B = obs.scaled.shape[0]
        actions = np.empty((B, len(nodes)))
        base_actions = heuristic(obs) if heuristic is not None else None
        for i, p in enumerate(nodes):
            agent = agents[p]
            actor = overrides.get(p)
            if actor is None:
                if agent.trained:
                    actor = agent.actor
                elif init == "heuristic":
                    actions[:, i] = base_actions[:, i]
                    continue
                else:
                    actor = agent.actor
            mean, _ = nets.mlp_forward(actor["mlp"], obs.scaled[:, agent.obs_idx])
            actions[:, i] = np.clip(mean[:, 0], -1.0, 1.0)
        return actions

    return policy


def train_imarl(scenario: ScenarioConfig, bsl: dict[str, int], cfg: TrainConfig,
                seed: int, init: str = "heuristic", order: str = "downstream-up",
                eval_seed: int = 10_000, accept_tol: float = 1e-3,
                max_iterations_per_agent: int = 20) -> TrainResult:
    """Iterative multi-agent training per the job-list schedule.

    Agents are trained one at a time for ``cfg.training_episodes``
    episodes while all others act deterministically; a candidate policy
    replaces the saved one only if the common-random-number ensemble
    evaluation improves by at least ``accept_tol`` (relative), in which
    case the agent's network neighbors are re-queued.
    """
    if init not in ("heuristic", "random"):
        raise ValueError(f"unknown init {init!r}")
    topo = scenario.topology
    nodes = list(topo.stock_points)
    rng = np.random.default_rng(_derive_seed(seed, "imarl"))
    agents = _imarl_agents(scenario, cfg, rng)

    ordered = sorted(nodes, key=lambda p: (topo.echelon_of[p], nodes.index(p)))
    if order == "upstream-down":
        ordered = ordered[::-1]
    elif order != "downstream-up":
        raise ValueError(f"unknown training order {order!r}")

    def eval_ensemble(overrides=None):
        mean_cost, per_ep = evaluate_policy(
            imarl_ensemble_policy(scenario, bsl, agents, init, overrides),
            scenario, bsl, seed=eval_seed,
        )
        return mean_cost, float(per_ep.std())

    saved_cost, saved_std = eval_ensemble()
    curve: list[CurvePoint] = [CurvePoint(0, saved_cost, saved_std)]
    iteration_log = []
    episodes_total = 0
    job_list = deque(ordered)
    queued = set(ordered)
    iter_count = {p: 0 for p in nodes}
    converged = True
    diverged = False

    while job_list:
        active = job_list.popleft()
        queued.discard(active)
        if iter_count[active] >= max_iterations_per_agent:
            converged = False
            continue
        iter_count[active] += 1
        best_candidate, best_cost, ep_in_iter, div = _train_one_agent(
            scenario, bsl, cfg, agents, agents[active], init, rng,
            eval_ensemble, curve, episodes_total,
        )
        episodes_total += ep_in_iter
        diverged = diverged or div
        improved = best_candidate is not None and best_cost < saved_cost * (1.0 - accept_tol)
        iteration_log.append({
            "agent": active, "iteration": iter_count[active],
            "best_cost": best_cost, "saved_cost": saved_cost, "accepted": improved,
        })
        if improved:
            agents[active].actor = best_candidate
            agents[active].trained = True
            saved_cost = best_cost
            for nb in topo.neighbors_of(active):
                if nb not in queued:
                    job_list.append(nb)
                    queued.add(nb)

    params = {
        "agents": {
            p: {"actor": _copy_tree(a.actor), "trained": a.trained,
                "obs_idx": a.obs_idx.copy()}
            for p, a in agents.items()
        },
        "init": init,
    }
    return TrainResult(
        "imarl", params, curve, saved_cost, diverged,
        extra={"iteration_log": iteration_log, "converged": converged},
    )


def _train_one_agent(scenario, bsl, cfg, agents, agent: ImarlAgent, init, rng,
                     eval_ensemble, curve, episodes_offset):
    """One IMARL iteration: PPO on a single agent against frozen peers."""
    nodes = list(scenario.topology.stock_points)
    n = len(nodes)
    i_active = nodes.index(agent.node)
    env = InventoryEnv(
        scenario, bsl, batch=cfg.num_envs,
        seed=int(rng.integers(0, 2**62)),
    )
    frozen = imarl_ensemble_policy(scenario, bsl, agents, init)
    actor = _copy_tree(agent.actor)
    critic = _copy_tree(agent.critic)
    optimizer = Adam(joint_params(actor, critic), cfg.learning_rate)

    episode_length = scenario.episode_length
    B, T = cfg.num_envs, cfg.steps_per_env
    obs = env.reset()
    episodes_done = 0
    next_eval = cfg.eval_every_episodes
    best_cost = np.inf
    best_actor = None
    diverged = False

    while episodes_done < cfg.training_episodes:
        buf_obs = np.empty((T, B, agent.obs_idx.size))
        buf_act = np.empty((T, B, 1))
        buf_logp = np.empty((T, B))
        buf_rew = np.empty((T, B))
        buf_val = np.empty((T, B))
        buf_next = np.empty((T, B))
        buf_trunc = np.zeros((T, B), dtype=bool)
        for t in range(T):
            own = obs.scaled[:, agent.obs_idx]
            mean, _ = nets.mlp_forward(actor["mlp"], own)
            act, pre, logp, _ = nets.gaussian_head(mean, actor["log_std"], rng)
            value, _ = nets.mlp_forward(critic, own)
            actions = frozen(obs)
            actions[:, i_active] = act[:, 0]
            buf_obs[t], buf_act[t], buf_logp[t], buf_val[t] = own, pre, logp, value[:, 0]
            obs, _, info = env.step(actions)
            buf_rew[t] = -info["cost_per_node"][:, agent.scope_idx].sum(axis=1) / 1000.0
            if env.t == episode_length:
                buf_trunc[t] = True
                tail, _ = nets.mlp_forward(critic, obs.scaled[:, agent.obs_idx])
                buf_next[t] = tail[:, 0]
                obs = env.reset_episodes()
                episodes_done += B
        for t in range(T - 1):
            if not buf_trunc[t, 0]:
                buf_next[t] = buf_val[t + 1]
        if not buf_trunc[T - 1, 0]:
            tail, _ = nets.mlp_forward(critic, obs.scaled[:, agent.obs_idx])
            buf_next[T - 1] = tail[:, 0]

        adv, ret = gae(buf_rew, buf_val, buf_next, buf_trunc, cfg.gamma, cfg.gae_lambda)
        batch = {
            "obs": buf_obs.reshape(T * B, -1),
            "actions": buf_act.reshape(T * B, 1),
            "logp_old": buf_logp.ravel(),
            "advantages": adv.ravel(),
            "returns": ret.ravel(),
            "values_old": buf_val.ravel(),
        }
        try:
            actor, critic, _ = ppo_update(actor, critic, batch, cfg, optimizer, rng)
        except TrainingDiverged as err:
            log.warning("IMARL agent %s diverged: %s", agent.node, err)
            diverged = True
            break
        while episodes_done >= next_eval:
            cost, std = eval_ensemble({agent.node: actor})
            curve.append(CurvePoint(episodes_offset + next_eval, cost, std))
            if cost < best_cost:
                best_cost = cost
                best_actor = _copy_tree(actor)
            next_eval += cfg.eval_every_episodes

    agent.critic = critic  # warm-start the critic for later iterations
    return best_actor, best_cost, episodes_done, diverged
