"""Vectorized supply-chain MDP environment.

State transitions follow a fixed three-event sequence per period:

1. receive shipments scheduled to arrive this period;
2. every stock point, in parallel, serves its backlog and then the
   orders received last period, rationing scarce stock to the customers
   with the lowest inventory position first; shipped units travel for a
   sampled lead time;
3. every stock point places its replenishment order with one uniformly
   chosen supplier, and fresh external demand arrives at the retailers.

The environment state is held in integer arrays with a leading batch
dimension, so one instance can advance many independent trajectories in
lockstep (vectorized rollouts and whole evaluation runs in one sweep).
The per-period cost is holding cost on end-of-period on-hand stock plus
backorder cost on the retailers' outstanding external backlog; the
reward is the negative cost divided by 1000.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import EXTERNAL, ScenarioConfig, ValidationError

REWARD_SCALE = 1000.0


@dataclass(frozen=True)
class Observation:
    """Per-stock-point inventory positions, raw and scaled to [-1, 1]."""

    ip: np.ndarray       # (batch, n) int
    scaled: np.ndarray   # (batch, n) float


def scale_ip(ip, ip_min, ip_max):
    span = np.maximum(ip_max - ip_min, 1)
    return np.clip(2.0 * (ip - ip_min) / span - 1.0, -1.0, 1.0)


def actions_to_orders(actions, o_max):
    """Map normalized actions in [-1, 1] to integer order quantities."""
    raw = np.floor((np.clip(actions, -1.0, 1.0) + 1.0) / 2.0 * o_max + 0.5)
    return np.clip(raw, 0, o_max).astype(np.int64)


def orders_to_actions(orders, o_max):
    return np.clip(2.0 * orders / np.maximum(o_max, 1) - 1.0, -1.0, 1.0)


class InventoryEnv:
    """Batch of independent supply-chain simulations sharing one scenario.

    All ``batch`` trajectories use a single seeded random stream, so a
    given (scenario, base-stock map, seed) triple reproduces bit-identical
    trajectories for identical action sequences.
    """

    def __init__(self, scenario: ScenarioConfig, bsl: dict[str, int],
                 batch: int = 1, seed: int = 0):
        topo = scenario.topology
        self.scenario = scenario
        self.nodes = list(topo.stock_points)
        self.index = {p: i for i, p in enumerate(self.nodes)}
        self.n = len(self.nodes)
        self.batch = batch
        missing = [p for p in self.nodes if p not in bsl]
        if missing:
            raise ValidationError(f"base-stock levels missing for {missing}")
        self.bsl = np.array([int(bsl[p]) for p in self.nodes], dtype=np.int64)

        params = [scenario.params[p] for p in self.nodes]
        self.h = np.array([sp.h for sp in params])
        self.b = np.array([sp.b for sp in params])
        self.o_max = np.array([sp.o_max for sp in params], dtype=np.int64)
        self.ip_min = np.array([sp.ip_min for sp in params], dtype=np.int64)
        self.ip_max = self.bsl + np.array([sp.ip_span for sp in params], dtype=np.int64)

        # internal edges then external-supply edges share one pipeline array
        self.int_edges = [(self.index[u], self.index[d]) for u, d in topo.edges]
        self.ei = len(self.int_edges)
        self.ext_nodes = [self.index[p] for p in topo.external_supply]
        self.ee = len(self.ext_nodes)
        self.E = self.ei + self.ee
        self.edge_cust = np.array(
            [d for _, d in self.int_edges] + self.ext_nodes, dtype=np.int64
        )

        self._lead_cdfs = []
        self._lead_offsets = []
        for u, d in topo.edges:
            spec = scenario.params[d].lead_in[u]
            self._lead_cdfs.append(np.cumsum(spec.resolved.probs))
            self._lead_offsets.append(spec.resolved.offset)
        for p in topo.external_supply:
            spec = scenario.params[p].lead_in[EXTERNAL]
            self._lead_cdfs.append(np.cumsum(spec.resolved.probs))
            self._lead_offsets.append(spec.resolved.offset)
        self._lead_offsets = np.array(self._lead_offsets, dtype=np.int64)
        max_lead = max(
            off + cdf.size - 1 for off, cdf in zip(self._lead_offsets, self._lead_cdfs)
        )
        self.horizon = int(max(max_lead, 1)) + 2

        self.retailer_idx = [self.index[p] for p in topo.retailers()]
        self.demand_cdfs = {}
        self.demand_offsets = {}
        for p in topo.retailers():
            spec = scenario.params[p].demand
            if spec is None:
                raise ValidationError(f"retailer {p} has no demand law")
            self.demand_cdfs[self.index[p]] = np.cumsum(spec.resolved.probs)
            self.demand_offsets[self.index[p]] = spec.resolved.offset

        # per supplier node: outbound internal edge ids and customer indices
        self.out_edges = {}
        for i, p in enumerate(self.nodes):
            eids = [e for e, (u, _) in enumerate(self.int_edges) if u == i]
            if eids:
                self.out_edges[i] = (
                    np.array(eids, dtype=np.int64),
                    np.array([self.int_edges[e][1] for e in eids], dtype=np.int64),
                )
        # per customer node: inbound edge ids (internal or external pipeline slot)
        self.in_edges = {}
        for i in range(self.n):
            ids = [e for e, (_, d) in enumerate(self.int_edges) if d == i]
            self.in_edges[i] = np.array(ids, dtype=np.int64)
        self.ext_edge_of = {p: self.ei + k for k, p in enumerate(self.ext_nodes)}

        self._incidence_cust = np.zeros((self.E, self.n))
        self._incidence_cust[np.arange(self.E), self.edge_cust] = 1.0
        self._incidence_sup = np.zeros((self.ei, self.n))
        for e, (u, _) in enumerate(self.int_edges):
            self._incidence_sup[e, u] = 1.0

        self.seed = seed
        self.reset(seed)

    # -- state management ------------------------------------------------

    def reset(self, seed: int | None = None) -> Observation:
        """Start fresh episodes: on-hand at the base-stock levels, empty
        pipelines, no backlog, period counter at zero."""
        if seed is not None:
            self.seed = seed
            self.rng = np.random.default_rng(seed)
        B, n = self.batch, self.n
        self.t = 0
        self.on_hand = np.tile(self.bsl, (B, 1))
        self.pipeline = np.zeros((B, self.E, self.horizon), dtype=np.int64)
        self.open_orders = np.zeros((B, self.ei), dtype=np.int64)
        self.ext_open = np.zeros((B, self.ee), dtype=np.int64)
        self.bo_int = np.zeros((B, self.ei), dtype=np.int64)
        self.bo_ext = np.zeros((B, n), dtype=np.int64)
        self.pending_demand = np.zeros((B, n), dtype=np.int64)
        self.on_order = np.zeros((B, n), dtype=np.int64)
        self.cum_injected = np.zeros(B, dtype=np.int64)
        self.cum_served_external = np.zeros(B, dtype=np.int64)
        return self._observe()

    def reset_episodes(self) -> Observation:
        """Reset the episode state but keep the random stream advancing."""
        saved_rng, saved_seed = self.rng, self.seed
        obs = self.reset(None)
        self.rng, self.seed = saved_rng, saved_seed
        return obs

    def inventory_position(self) -> np.ndarray:
        owed = (self.open_orders + self.bo_int) @ self._incidence_sup
        return (
            self.on_hand
            + self.on_order
            - owed.astype(np.int64)
            - self.bo_ext
            - self.pending_demand
        )

    def _observe(self) -> Observation:
        ip = self.inventory_position()
        return Observation(ip=ip, scaled=scale_ip(ip, self.ip_min, self.ip_max))

    def total_stock(self) -> np.ndarray:
        return self.on_hand.sum(axis=1) + self.pipeline.sum(axis=(1, 2))

    # -- transition ------------------------------------------------------

    def _sample_leads(self) -> np.ndarray:
        u = self.rng.random((self.batch, self.E))
        lam = np.empty((self.batch, self.E), dtype=np.int64)
        for e in range(self.E):
            lam[:, e] = self._lead_offsets[e] + np.minimum(
                np.searchsorted(self._lead_cdfs[e], u[:, e], side="right"),
                self._lead_cdfs[e].size - 1,
            )
        return lam

    def step(self, actions: np.ndarray):
        """Advance one period; returns (obs, reward, info).

        ``actions`` holds normalized order quantities in [-1, 1] per
        stock point; values outside the range are clamped and flagged in
        ``info['action_clamped']``.
        """
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.batch, self.n):
            raise ValidationError(
                f"action shape {actions.shape} != {(self.batch, self.n)}"
            )
        clamped = bool(np.any(actions < -1.0) or np.any(actions > 1.0))
        self.t += 1
        t = self.t
        B = self.batch
        bidx = np.arange(B)

        # Event 1: receive shipments due this period
        slot = t % self.horizon
        arrivals = self.pipeline[:, :, slot]
        self.on_hand += (arrivals @ self._incidence_cust).astype(np.int64)
        self.on_order -= (arrivals @ self._incidence_cust).astype(np.int64)
        self.pipeline[:, :, slot] = 0

        # Event 2: fulfill backlog, then last period's orders, lowest-IP
        # customers first; all stock points act on the same IP snapshot.
        ip_snap = self.inventory_position()
        lam = np.maximum(self._sample_leads(), 1)

        for k, node in enumerate(self.ext_nodes):
            e = self.ei + k
            amt = self.ext_open[:, k]
            dest = (t + lam[:, e]) % self.horizon
            self.pipeline[bidx, e, dest] += amt
            self.cum_injected += amt
            self.ext_open[:, k] = 0

        for p, (eids, custs) in self.out_edges.items():
            order = np.argsort(ip_snap[:, custs], axis=1, kind="stable")
            bo = np.take_along_axis(self.bo_int[:, eids], order, axis=1)
            oo = np.take_along_axis(self.open_orders[:, eids], order, axis=1)
            queue = np.concatenate([bo, oo], axis=1)
            before = np.cumsum(queue, axis=1) - queue
            ship = np.clip(self.on_hand[:, p][:, None] - before, 0, queue)
            c = eids.size
            shipped_sorted = ship[:, :c] + ship[:, c:]
            shipped = np.zeros_like(shipped_sorted)
            np.put_along_axis(shipped, order, shipped_sorted, axis=1)
            owed = self.bo_int[:, eids] + self.open_orders[:, eids] - shipped
            self.bo_int[:, eids] = owed
            self.open_orders[:, eids] = 0
            self.on_hand[:, p] -= shipped.sum(axis=1)
            dest = (t + lam[:, eids]) % self.horizon
            np.add.at(self.pipeline, (bidx[:, None], eids[None, :], dest), shipped)

        for p in self.retailer_idx:
            avail = self.on_hand[:, p]
            ship_bo = np.minimum(avail, self.bo_ext[:, p])
            ship_new = np.minimum(avail - ship_bo, self.pending_demand[:, p])
            self.on_hand[:, p] = avail - ship_bo - ship_new
            self.bo_ext[:, p] += self.pending_demand[:, p] - ship_bo - ship_new
            self.pending_demand[:, p] = 0
            self.cum_served_external += ship_bo + ship_new

        # Event 3: place replenishment orders and draw external demand
        orders = actions_to_orders(actions, self.o_max)
        for p in range(self.n):
            eids = self.in_edges[p]
            if eids.size == 0:
                k = self.ext_edge_of[p] - self.ei
                self.ext_open[:, k] += orders[:, p]
            elif eids.size == 1:
                self.open_orders[:, eids[0]] += orders[:, p]
            else:
                choice = self.rng.integers(0, eids.size, size=B)
                for j in range(eids.size):
                    self.open_orders[:, eids[j]] += orders[:, p] * (choice == j)
        self.on_order += orders

        if self.retailer_idx:
            u = self.rng.random((B, len(self.retailer_idx)))
            for j, p in enumerate(self.retailer_idx):
                cdf = self.demand_cdfs[p]
                q = self.demand_offsets[p] + np.minimum(
                    np.searchsorted(cdf, u[:, j], side="right"), cdf.size - 1
                )
                self.pending_demand[:, p] = q

        cost_node = self.h * self.on_hand + self.b * self.bo_ext
        cost = cost_node.sum(axis=1)
        reward = -cost / REWARD_SCALE
        info = {
            "cost": cost,
            "cost_per_node": cost_node,
            "holding_cost": (self.h * self.on_hand).sum(axis=1),
            "backorder_cost": (self.b * self.bo_ext).sum(axis=1),
            "orders": orders,
            "action_clamped": clamped,
            "period": t,
        }
        return self._observe(), reward, info


def evaluate_policy(policy, scenario: ScenarioConfig, bsl: dict[str, int],
                    episodes: int | None = None, steps: int | None = None,
                    warmup: int | None = None, seed: int = 0):
    """Mean cumulative unscaled cost of a deterministic policy.

    Runs ``episodes`` independent episodes of ``steps`` periods each and
    sums the cost over the periods after the warm-up window.  Returns
    ``(mean_cost, per_episode_costs)``.
    """
    episodes = scenario.eval_episodes if episodes is None else episodes
    steps = scenario.eval_steps if steps is None else steps
    warmup = scenario.eval_warmup if warmup is None else warmup
    if not warmup < steps:
        raise ValidationError("warmup must be smaller than the episode length")
    env = InventoryEnv(scenario, bsl, batch=episodes, seed=seed)
    obs = env.reset(seed)
    total = np.zeros(episodes)
    for t in range(1, steps + 1):
        obs, _, info = env.step(policy(obs))
        if t > warmup:
            total += info["cost"]
    return float(total.mean()), total


def dump_trajectory(path, scenario: ScenarioConfig, bsl: dict[str, int],
                    policy, steps: int, seed: int = 0) -> None:
    """Write a single-trajectory CSV: period, stock_point, on_hand, ip,
    order_placed, backlog, cost."""
    import csv

    env = InventoryEnv(scenario, bsl, batch=1, seed=seed)
    obs = env.reset(seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "stock_point", "on_hand", "ip", "order_placed",
                         "backlog", "cost"])
        for _ in range(steps):
            obs, _, info = env.step(policy(obs))
            for i, p in enumerate(env.nodes):
                backlog = int(env.bo_ext[0, i])
                for e, (u, d) in enumerate(env.int_edges):
                    if u == i:
                        backlog += int(env.bo_int[0, e])
                writer.writerow([
                    info["period"], p, int(env.on_hand[0, i]), int(obs.ip[0, i]),
                    int(info["orders"][0, i]), backlog,
                    float(info["cost_per_node"][0, i]),
                ])
