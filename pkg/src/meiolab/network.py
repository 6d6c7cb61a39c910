"""Supply-network topology and scenario construction.

A scenario bundles a validated topology (stock points, directed supply
edges, echelon structure) with per-stock-point cost, bound, demand, and
lead-time parameters.  The named scenario grid A1..D1 combines four
network structures with increasingly stochastic demand and lead-time
laws; custom scenarios load from a YAML document.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .pmf import DemandSpec, InvalidParameterError, LeadTimeSpec

EXTERNAL = "external"


class ValidationError(ValueError):
    """Raised when a topology or scenario violates a structural rule."""


# Table of echelon-specific costs and bounds: holding cost, backorder
# cost, max order per period, IP lower bound, and the span added to the
# base-stock level to obtain the IP upper bound.  Echelon 1 is the
# customer-facing retailer layer.
ECHELON_DEFAULTS = {
    1: {"h": 1.0, "b": 19.0, "o_max": 50, "ip_min": -100, "ip_span": 50},
    2: {"h": 0.6, "b": 0.0, "o_max": 150, "ip_min": -300, "ip_span": 150},
    3: {"h": 0.4, "b": 0.0, "o_max": 500, "ip_min": -1000, "ip_span": 500},
}


@dataclass(frozen=True)
class NetworkTopology:
    """Directed acyclic supply network.

    ``edges`` are internal (supplier, customer) pairs; nodes listed in
    ``external_supply`` are additionally fed by an unlimited outside
    source.  ``echelon_of`` maps each stock point to its echelon index,
    1 being the retailer layer.
    """

    stock_points: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    external_supply: tuple[str, ...]
    echelon_of: dict[str, int]

    def suppliers_of(self, p: str) -> list[str]:
        return [u for u, d in self.edges if d == p]

    def customers_of(self, p: str) -> list[str]:
        return [d for u, d in self.edges if u == p]

    def retailers(self) -> list[str]:
        return [p for p in self.stock_points if not self.customers_of(p)]

    def descendants_of(self, p: str) -> list[str]:
        """All stock points reachable downstream from ``p`` (excluding it)."""
        seen: list[str] = []
        frontier = self.customers_of(p)
        while frontier:
            q = frontier.pop()
            if q not in seen:
                seen.append(q)
                frontier.extend(self.customers_of(q))
        return sorted(seen, key=self.stock_points.index)

    def neighbors_of(self, p: str) -> list[str]:
        """Direct upstream predecessors and downstream successors."""
        out = self.suppliers_of(p) + self.customers_of(p)
        return sorted(set(out), key=self.stock_points.index)


@dataclass
class StockPointParams:
    """Costs, bounds, and stochastic laws attached to one stock point."""

    echelon: int
    h: float
    b: float
    o_max: int
    ip_min: int
    ip_span: int
    demand: DemandSpec | None = None
    lead_in: dict[str, LeadTimeSpec] = field(default_factory=dict)
    bsl: int | None = None


@dataclass
class ScenarioConfig:
    """A fully specified experiment scenario.

    ``params`` is keyed by stock point.  ``bsl`` entries are filled by
    the benchmark heuristic; the IP upper bound of a stock point is its
    base-stock level plus the echelon's ``ip_span``.
    """

    scenario_id: str
    topology: NetworkTopology
    params: dict[str, StockPointParams]
    episode_length: int = 128
    eval_episodes: int = 100
    eval_steps: int = 75
    eval_warmup: int = 25

    def with_bsl(self, bsl: dict[str, int]) -> "ScenarioConfig":
        missing = [p for p in self.topology.stock_points if p not in bsl]
        if missing:
            raise ValidationError(f"base-stock levels missing for {missing}")
        params = {p: replace(sp, bsl=int(bsl[p])) for p, sp in self.params.items()}
        return replace(self, params=params)


def _infer_echelons(nodes, edges) -> dict[str, int]:
    customers = {p: [d for u, d in edges if u == p] for p in nodes}
    echelon: dict[str, int] = {}

    def depth(p, trail):
        if p in trail:
            cycle = " -> ".join(trail + [p])
            raise ValidationError(f"supply edges contain a cycle: {cycle}")
        if p not in echelon:
            if not customers[p]:
                echelon[p] = 1
            else:
                echelon[p] = 1 + max(depth(d, trail + [p]) for d in customers[p])
        return echelon[p]

    for p in nodes:
        depth(p, [])
    return echelon


def build_topology(nodes, edges, external_supply=None) -> NetworkTopology:
    """Validate an edge list and infer echelon indices.

    Echelon index = longest path distance to external demand + 1.  When
    ``external_supply`` is omitted, every node without an internal
    supplier is fed by the outside source.
    """
    nodes = tuple(nodes)
    if len(set(nodes)) != len(nodes):
        raise ValidationError("duplicate stock point identifiers")
    for u, d in edges:
        if u not in nodes or d not in nodes:
            raise ValidationError(f"edge ({u}, {d}) references an unknown stock point")
        if u == d:
            raise ValidationError(f"self-loop at {u}")
    edges = tuple((u, d) for u, d in edges)
    if len(set(edges)) != len(edges):
        raise ValidationError("duplicate supply edges")
    echelon = _infer_echelons(nodes, edges)

    suppliers = {p: [u for u, d in edges if d == p] for p in nodes}
    if external_supply is None:
        external_supply = tuple(p for p in nodes if not suppliers[p])
    else:
        external_supply = tuple(external_supply)
        for p in external_supply:
            if p not in nodes:
                raise ValidationError(f"external supply names unknown stock point {p}")
    topo = NetworkTopology(nodes, edges, external_supply, echelon)

    for p in nodes:
        if not suppliers[p] and p not in external_supply:
            raise ValidationError(f"stock point {p} has no supplier (orphan)")
    # reachability from the outside source
    reached = set(external_supply)
    frontier = list(external_supply)
    while frontier:
        q = frontier.pop()
        for d in topo.customers_of(q):
            if d not in reached:
                reached.add(d)
                frontier.append(d)
    unreachable = [p for p in nodes if p not in reached]
    if unreachable:
        raise ValidationError(f"not reachable from an external supplier: {unreachable}")
    return topo


# Shipped default structures honoring the published stock-point and
# echelon counts; exact edge sets are declared conventions.
def small_divergent() -> NetworkTopology:
    nodes = ["w1", "r1", "r2", "r3"]
    edges = [("w1", "r1"), ("w1", "r2"), ("w1", "r3")]
    return build_topology(nodes, edges)


def small_general() -> NetworkTopology:
    nodes = ["w1", "w2", "w3"] + [f"r{i}" for i in range(1, 7)]
    edges = [
        ("w1", "r1"), ("w1", "r2"),
        ("w2", "r2"), ("w2", "r3"), ("w2", "r4"),
        ("w3", "r4"), ("w3", "r5"), ("w3", "r6"),
    ]
    return build_topology(nodes, edges)


def large_divergent() -> NetworkTopology:
    nodes = ["t1", "m1", "m2", "m3"] + [f"r{i}" for i in range(1, 10)]
    edges = [("t1", "m1"), ("t1", "m2"), ("t1", "m3")]
    for i in range(1, 10):
        edges.append((f"m{(i - 1) // 3 + 1}", f"r{i}"))
    return build_topology(nodes, edges)


def large_general() -> NetworkTopology:
    nodes = ["t1", "t2", "m1", "m2", "m3", "m4"] + [f"r{i}" for i in range(1, 13)]
    edges = [
        ("t1", "m1"), ("t1", "m2"), ("t2", "m2"), ("t2", "m3"),
        ("t1", "m4"), ("t2", "m4"),
        ("m1", "r1"), ("m1", "r2"), ("m1", "r3"), ("m2", "r3"),
        ("m2", "r4"), ("m2", "r5"), ("m3", "r6"), ("m3", "r7"),
        ("m3", "r8"), ("m4", "r8"), ("m4", "r9"), ("m4", "r10"),
        ("m4", "r11"), ("m1", "r12"), ("m4", "r12"),
    ]
    return build_topology(nodes, edges, external_supply=["t1", "t2"])


_STRUCTURES = {
    "A": small_divergent,
    "B": small_general,
    "C": large_divergent,
    "D": large_divergent,  # placeholder, replaced below
}
_STRUCTURES["D"] = large_general

NAMED_SCENARIOS = tuple(
    [f"A{i}" for i in range(1, 5)]
    + [f"B{i}" for i in range(1, 5)]
    + [f"C{i}" for i in range(1, 5)]
    + ["D1"]
)


def _base_params(topo: NetworkTopology) -> dict[str, StockPointParams]:
    params = {}
    for p in topo.stock_points:
        e = topo.echelon_of[p]
        if e not in ECHELON_DEFAULTS:
            raise ValidationError(f"no default parameters for echelon {e} (node {p})")
        d = ECHELON_DEFAULTS[e]
        params[p] = StockPointParams(
            echelon=e, h=d["h"], b=d["b"], o_max=d["o_max"],
            ip_min=d["ip_min"], ip_span=d["ip_span"],
        )
    return params


def build_scenario(scenario_id: str, data_source: dict | None = None,
                   tail_eps: float = 1e-12) -> ScenarioConfig:
    """Construct a named scenario from the A1..D1 grid.

    ``data_source`` maps product ids to demand/lead-time series and is
    required by the empirical scenarios (A2, A4, B2, B4, C2, C4).
    """
    scenario_id = scenario_id.upper()
    if scenario_id not in NAMED_SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario_id!r}; expected one of {NAMED_SCENARIOS}")
    structure, variant = scenario_id[0], int(scenario_id[1])
    topo = _STRUCTURES[structure]()
    params = _base_params(topo)

    demand_kind = "empirical" if variant in (2, 4) else "poisson-uniform"
    lead_kind = {1: "static", 2: "static", 3: "uniform", 4: "empirical"}[variant]
    products: list[str] = []
    if demand_kind == "empirical" or lead_kind == "empirical":
        if not data_source:
            raise ValidationError(
                f"scenario {scenario_id} uses empirical data; a data source is required"
            )
        products = sorted(data_source)

    next_product = 0

    def take_product() -> str:
        nonlocal next_product
        pid = products[next_product % len(products)]
        next_product += 1
        return pid

    for p in topo.retailers():
        if demand_kind == "poisson-uniform":
            params[p].demand = DemandSpec.poisson_uniform(5, 15, tail_eps)
        else:
            pid = take_product()
            params[p].demand = DemandSpec.empirical(pid, data_source[pid], target_mean=10.0)

    for p in topo.stock_points:
        inbound = topo.suppliers_of(p) or [EXTERNAL]
        for u in inbound:
            if lead_kind == "static":
                params[p].lead_in[u] = LeadTimeSpec.static(1)
            elif lead_kind == "uniform":
                params[p].lead_in[u] = LeadTimeSpec.uniform(1, 5)
            else:
                pid = take_product()
                params[p].lead_in[u] = LeadTimeSpec.empirical(
                    pid, data_source[pid], target_mean=3.0
                )

    return ScenarioConfig(scenario_id=scenario_id, topology=topo, params=params)


def validate_heuristic_preconditions(scenario: ScenarioConfig) -> list[str]:
    """Check the structural conditions the benchmark heuristic relies on.

    Returns a list of violation descriptions; an empty list means the
    scenario is eligible.
    """
    topo = scenario.topology
    violations = []
    retailers = set(topo.retailers())
    for p in topo.stock_points:
        sp = scenario.params[p]
        if sp.b > 0 and p not in retailers:
            violations.append(f"backorder cost {sp.b} on non-retailer {p}")
        if p in retailers and sp.demand is None:
            violations.append(f"retailer {p} has no demand law")
        if p not in retailers and sp.demand is not None:
            violations.append(f"non-retailer {p} faces external demand")
    by_echelon: dict[int, set[float]] = {}
    for p in topo.stock_points:
        by_echelon.setdefault(scenario.params[p].echelon, set()).add(scenario.params[p].h)
    for e in sorted(by_echelon):
        hs = by_echelon[e]
        if len(hs) > 1:
            violations.append(f"echelon {e} has mixed holding costs {sorted(hs)}")
    levels = [min(by_echelon[e]) for e in sorted(by_echelon)]
    for lo, hi in zip(levels[1:], levels[:-1]):
        if not lo < hi:
            violations.append(
                "holding costs must strictly increase from upstream to downstream "
                f"echelons, got {levels} (downstream first)"
            )
            break
    return violations


def _spec_from_mapping(kind_map: dict, which: str, data_source: dict | None):
    kind = kind_map.get("kind")
    if which == "demand":
        if kind == "poisson-uniform":
            return DemandSpec.poisson_uniform(int(kind_map["lo"]), int(kind_map["hi"]))
        if kind == "point":
            return DemandSpec.point(int(kind_map["value"]))
        if kind == "empirical":
            pid = str(kind_map["product"])
            if not data_source or pid not in data_source:
                raise ValidationError(f"empirical demand references missing product {pid}")
            return DemandSpec.empirical(pid, data_source[pid],
                                        float(kind_map.get("mean", 10.0)))
        raise ValidationError(f"unknown demand kind {kind!r}")
    if kind == "static":
        return LeadTimeSpec.static(int(kind_map["value"]))
    if kind == "uniform":
        return LeadTimeSpec.uniform(int(kind_map["lo"]), int(kind_map["hi"]))
    if kind == "empirical":
        pid = str(kind_map["product"])
        if not data_source or pid not in data_source:
            raise ValidationError(f"empirical lead time references missing product {pid}")
        return LeadTimeSpec.empirical(pid, data_source[pid], float(kind_map.get("mean", 3.0)))
    raise ValidationError(f"unknown lead time kind {kind!r}")


def load_topology(config_text: str) -> NetworkTopology:
    """Parse a YAML topology document (fields ``nodes``, ``edges``,
    ``external_supply``, ``echelon_overrides``) into a validated topology."""
    doc = yaml.safe_load(config_text)
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise ValidationError("topology document must be a mapping with a 'nodes' field")
    nodes = [str(n) for n in doc["nodes"]]
    edges = [(str(u), str(d)) for u, d in doc.get("edges", [])]
    topo = build_topology(nodes, edges, doc.get("external_supply"))
    overrides = doc.get("echelon_overrides") or {}
    if overrides:
        echelon = dict(topo.echelon_of)
        for p, e in overrides.items():
            if str(p) not in topo.stock_points:
                raise ValidationError(f"echelon override for unknown stock point {p}")
            echelon[str(p)] = int(e)
        topo = NetworkTopology(topo.stock_points, topo.edges, topo.external_supply, echelon)
    return topo


def load_scenario(config_text: str, data_source: dict | None = None) -> ScenarioConfig:
    """Parse a full scenario document: topology plus ``demand``,
    ``lead_time``, ``costs``, and ``bounds`` sections."""
    doc = yaml.safe_load(config_text)
    topo = load_topology(config_text)
    params = {}
    costs = doc.get("costs") or {}
    bounds = doc.get("bounds") or {}
    for p in topo.stock_points:
        e = topo.echelon_of[p]
        base = dict(ECHELON_DEFAULTS.get(e) or {})
        if not base:
            raise ValidationError(f"no cost defaults for echelon {e}; add a costs entry")
        ecosts = costs.get(e) or {}
        ebounds = bounds.get(e) or {}
        params[p] = StockPointParams(
            echelon=e,
            h=float(ecosts.get("holding", base["h"])),
            b=float(ecosts.get("backorder", base["b"])),
            o_max=int(ebounds.get("o_max", base["o_max"])),
            ip_min=int(ebounds.get("ip_min", base["ip_min"])),
            ip_span=int(ebounds.get("ip_span", base["ip_span"])),
        )
    demand_map = doc.get("demand")
    if demand_map is None:
        raise ValidationError("scenario document needs a 'demand' section")
    lead_map = doc.get("lead_time")
    if lead_map is None:
        raise ValidationError("scenario document needs a 'lead_time' section")
    for p in topo.retailers():
        per_node = demand_map.get(p) if p in (demand_map or {}) else demand_map
        params[p].demand = _spec_from_mapping(per_node, "demand", data_source)
    for p in topo.stock_points:
        inbound = topo.suppliers_of(p) or [EXTERNAL]
        for u in inbound:
            params[p].lead_in[u] = _spec_from_mapping(lead_map, "lead", data_source)
    return ScenarioConfig(
        scenario_id=str(doc.get("scenario_id", "custom")),
        topology=topo,
        params=params,
        episode_length=int(doc.get("episode_length", 128)),
    )
