"""Decomposition-aggregation benchmark for base-stock levels.

The network is decomposed into one serial system per (retailer, supply
path); each serial system is solved with two-sided newsvendor bounds on
exact lead-time-demand PMFs; the serial solutions are then aggregated
back onto the network by matching each shared upstream stock point's
expected backorders against the sum over its serial counterparts.  The
resulting order-up-to policy is the cost benchmark every learned policy
is compared against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import pmf as pm
from .network import EXTERNAL, ScenarioConfig, ValidationError
from .simulator import evaluate_policy, orders_to_actions

log = logging.getLogger(__name__)


def effective_lead(spec: pm.LeadTimeSpec) -> pm.Pmf:
    """Replenishment lead as the simulator realizes it: the sampled edge
    lead (floored at one period, since a shipment can never arrive before
    the next receiving event) plus the one-period order-processing stage."""
    probs = spec.resolved.probs.copy()
    offset = spec.resolved.offset
    if offset == 0:
        if probs.size == 1:
            probs = np.array([probs[0]])
            offset = 1
        else:
            probs[1] += probs[0]
            probs = probs[1:]
            offset = 1
    return pm.convolve(pm.Pmf(offset, probs), pm.make_point_mass(1))


@dataclass
class SerialSystem:
    """One retailer-to-source path, solved as a serial inventory chain.

    Stage 1 is the retailer, stage N the most upstream stock point.
    """

    nodes: list[str]                 # stage order, retailer first
    demand: pm.Pmf                   # per-period demand at stage 1
    leads: list[pm.Pmf]              # effective replenishment lead per stage
    local_h: list[float]             # local holding cost per stage
    b: float                         # retailer backorder cost

    def __post_init__(self):
        n = len(self.nodes)
        if not (len(self.leads) == len(self.local_h) == n) or n == 0:
            raise ValidationError("serial system stages are inconsistent")


@dataclass
class BaseStockSolution:
    """Echelon and installation base-stock levels for one serial system."""

    nodes: list[str]
    echelon_levels: list[int]
    installation_levels: list[int]
    expected_backorders: list[float]  # installation shortfall per stage
    lead_time_demand: list[pm.Pmf] = field(repr=False, default_factory=list)


def echelon_holding_costs(local_h) -> list[float]:
    """Echelon cost at stage j is local_h(j) - local_h(j+1); requires
    local holding costs strictly decreasing upstream."""
    local_h = list(local_h)
    for lo, hi in zip(local_h[1:], local_h[:-1]):
        if not lo < hi:
            raise pm.InvalidParameterError(
                f"local holding costs must strictly decrease upstream, got {local_h}"
            )
    ext = local_h + [0.0]
    return [ext[j] - ext[j + 1] for j in range(len(local_h))]


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def shang_song_serial(system: SerialSystem) -> BaseStockSolution:
    """Two-sided newsvendor bounds on each echelon's lead-time demand.

    For stage j with echelon holding cost suffix sums H_k, the optimal
    echelon base stock lies between the fractiles of the echelon
    lead-time demand at (b + H_{j+1})/(b + H_1) and (b + H_{j+1})/(b + H_j);
    the rounded midpoint of the two quantiles is used.
    """
    n = len(system.nodes)
    ech = echelon_holding_costs(system.local_h)
    suffix = np.concatenate([np.cumsum(ech[::-1])[::-1], [0.0]])  # H_1..H_{N+1}
    b = system.b

    echelon_levels = []
    installation = []
    shortfalls = []
    own_ltd = []
    cum_lead = pm.make_point_mass(0)
    for j in range(n):
        cum_lead = pm.convolve(cum_lead, system.leads[j])
        d_j = pm.compound_lead_time_demand(system.demand, cum_lead)
        r_low = (b + suffix[j + 1]) / (b + suffix[0])
        r_high = (b + suffix[j + 1]) / (b + suffix[j])
        q_low = d_j.quantile(min(max(r_low, 1e-12), 1 - 1e-12))
        q_high = d_j.quantile(min(max(r_high, 1e-12), 1 - 1e-12))
        echelon_levels.append(_round_half_up((q_low + q_high) / 2.0))
        below = echelon_levels[j - 1] if j > 0 else 0
        inst = echelon_levels[j] - below
        if inst < 0:
            log.warning(
                "negative installation level %d at stage %s; floored to 0",
                inst, system.nodes[j],
            )
            inst = 0
        installation.append(inst)
        ltd_own = pm.compound_lead_time_demand(system.demand, system.leads[j])
        own_ltd.append(ltd_own)
        shortfalls.append(ltd_own.expected_shortfall(inst))
    return BaseStockSolution(
        nodes=list(system.nodes),
        echelon_levels=echelon_levels,
        installation_levels=installation,
        expected_backorders=shortfalls,
        lead_time_demand=own_ltd,
    )


def decompose(scenario: ScenarioConfig) -> list[SerialSystem]:
    """One serial system per (retailer, path to an external source)."""
    topo = scenario.topology
    systems = []
    for r in topo.retailers():
        demand = scenario.params[r].demand.resolved
        b = scenario.params[r].b

        def walk(path):
            head = path[-1]
            sups = topo.suppliers_of(head)
            if not sups:
                leads = []
                for j, node in enumerate(path):
                    supplier = path[j + 1] if j + 1 < len(path) else EXTERNAL
                    leads.append(effective_lead(scenario.params[node].lead_in[supplier]))
                systems.append(SerialSystem(
                    nodes=list(path),
                    demand=demand,
                    leads=leads,
                    local_h=[scenario.params[n].h for n in path],
                    b=b,
                ))
                return
            for u in sups:
                walk(path + [u])

        walk([r])
    return systems


def upstream_demand_pmf(scenario: ScenarioConfig, u: str) -> pm.Pmf:
    """Per-period order stream a warehouse sees from its customers.

    Under base-stock operation each customer's order stream equals its
    demand stream; a customer with k suppliers routes each period's whole
    order to one of them uniformly, thinning the stream seen by each.
    """
    topo = scenario.topology
    if not topo.customers_of(u):
        raise ValidationError(f"{u} is a retailer; upstream demand is undefined")
    memo: dict[str, pm.Pmf] = {}

    def stream(p: str) -> pm.Pmf:
        if p in memo:
            return memo[p]
        customers = topo.customers_of(p)
        if not customers:
            out = scenario.params[p].demand.resolved
        else:
            parts = [
                pm.thin_random_routing(stream(d), max(len(topo.suppliers_of(d)), 1))
                for d in customers
            ]
            out = pm.convolve_all(parts)
        memo[p] = out
        return out

    return stream(u)


def _own_effective_lead(scenario: ScenarioConfig, p: str) -> pm.Pmf:
    """Replenishment lead of ``p``; a uniform mixture when several
    suppliers are chosen at random."""
    topo = scenario.topology
    suppliers = topo.suppliers_of(p) or [EXTERNAL]
    leads = [effective_lead(scenario.params[p].lead_in[u]) for u in suppliers]
    if len(leads) == 1:
        return leads[0]
    return pm.mix(leads, np.full(len(leads), 1.0 / len(leads)))


def backorder_match(scenario: ScenarioConfig,
                    solutions: list[BaseStockSolution]) -> dict[str, int]:
    """Aggregate serial solutions into installation levels per stock point.

    Retailers take their serial levels directly.  Every shared upstream
    stock point gets the smallest level whose expected shortfall against
    its aggregate lead-time demand is closest to the summed shortfall of
    its serial counterparts; expected shortfall is monotone in the level,
    so the search is a bisection.
    """
    topo = scenario.topology
    retailers = set(topo.retailers())
    bsl: dict[str, int] = {}

    by_node: dict[str, list[tuple[BaseStockSolution, int]]] = {}
    for sol in solutions:
        for j, node in enumerate(sol.nodes):
            by_node.setdefault(node, []).append((sol, j))

    for p in topo.stock_points:
        entries = by_node.get(p, [])
        if not entries:
            raise ValidationError(f"no serial system covers stock point {p}")
        if p in retailers:
            levels = [sol.installation_levels[j] for sol, j in entries]
            bsl[p] = _round_half_up(float(np.mean(levels)))
            continue
        target = sum(sol.expected_backorders[j] for sol, j in entries)
        agg = pm.compound_lead_time_demand(
            upstream_demand_pmf(scenario, p), _own_effective_lead(scenario, p)
        )
        lo, hi = 0, agg.max_value
        if agg.expected_shortfall(lo) <= target:
            bsl[p] = lo
            continue
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if agg.expected_shortfall(mid) <= target:
                hi = mid
            else:
                lo = mid
        below, above = agg.expected_shortfall(lo), agg.expected_shortfall(hi)
        bsl[p] = lo if abs(below - target) <= abs(above - target) else hi
    return bsl


def base_stock_policy(bsl: dict[str, int], scenario: ScenarioConfig):
    """Order-up-to policy: order clamp(BSL - IP, 0, o_max) each period."""
    nodes = scenario.topology.stock_points
    levels = np.array([int(bsl[p]) for p in nodes], dtype=np.int64)
    o_max = np.array([scenario.params[p].o_max for p in nodes], dtype=np.int64)

    def policy(obs):
        orders = np.clip(levels - obs.ip, 0, o_max)
        return orders_to_actions(orders, o_max)

    return policy


@dataclass
class HeuristicResult:
    bsl: dict[str, int]
    solutions: list[BaseStockSolution]
    benchmark_cost: float | None
    expected_backorders: dict[str, float]


def da_heuristic(scenario: ScenarioConfig, evaluate: bool = True,
                 eval_seed: int = 0) -> HeuristicResult:
    """Full benchmark pipeline: decompose, solve each serial system,
    match backorders, and (optionally) simulate the benchmark cost."""
    from .network import validate_heuristic_preconditions

    violations = validate_heuristic_preconditions(scenario)
    if violations:
        raise ValidationError(
            "scenario violates heuristic preconditions: " + "; ".join(violations)
        )
    solutions = [shang_song_serial(s) for s in decompose(scenario)]
    bsl = backorder_match(scenario, solutions)

    shortfalls: dict[str, float] = {}
    for p in scenario.topology.stock_points:
        if scenario.topology.customers_of(p):
            agg = pm.compound_lead_time_demand(
                upstream_demand_pmf(scenario, p), _own_effective_lead(scenario, p)
            )
            shortfalls[p] = agg.expected_shortfall(bsl[p])
        else:
            ltd = pm.compound_lead_time_demand(
                scenario.params[p].demand.resolved, _own_effective_lead(scenario, p)
            )
            shortfalls[p] = ltd.expected_shortfall(bsl[p])

    cost = None
    if evaluate:
        completed = scenario.with_bsl(bsl)
        cost, _ = evaluate_policy(
            base_stock_policy(bsl, completed), completed, bsl, seed=eval_seed
        )
    return HeuristicResult(
        bsl=bsl, solutions=solutions, benchmark_cost=cost,
        expected_backorders=shortfalls,
    )
