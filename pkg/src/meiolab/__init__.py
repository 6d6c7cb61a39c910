"""meiolab: a laboratory for multi-echelon inventory optimization.

Exact discrete-distribution calculus, supply-network scenarios, a
vectorized supply-chain MDP, a decomposition-aggregation base-stock
benchmark, and single-/multi-agent policy-gradient training with a
seeded experiment grid.
"""

from .heuristic import (
    BaseStockSolution,
    HeuristicResult,
    SerialSystem,
    base_stock_policy,
    da_heuristic,
    shang_song_serial,
)
from .network import (
    ECHELON_DEFAULTS,
    EXTERNAL,
    NAMED_SCENARIOS,
    NetworkTopology,
    ScenarioConfig,
    StockPointParams,
    ValidationError,
    build_scenario,
    build_topology,
    load_scenario,
    load_topology,
)
from .pmf import (
    DemandSpec,
    InvalidParameterError,
    LeadTimeSpec,
    Pmf,
    compound_lead_time_demand,
    convolve,
    convolve_all,
    load_demand_csv,
    make_empirical,
    make_point_mass,
    make_poisson,
    make_uniform_poisson_mixture,
    mix,
    thin_random_routing,
)
from .ppo import TrainConfig, TrainingDiverged
from .simulator import (
    InventoryEnv,
    Observation,
    actions_to_orders,
    evaluate_policy,
    orders_to_actions,
)
from .training import TrainResult, train_imarl, train_mappo, train_sarl
from .experiments import (
    TrialResult,
    export_report,
    load_checkpoint,
    make_policy,
    policy_map,
    run_grid,
    run_trial,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "BaseStockSolution", "DemandSpec", "ECHELON_DEFAULTS", "EXTERNAL",
    "HeuristicResult", "InvalidParameterError", "InventoryEnv",
    "LeadTimeSpec", "NAMED_SCENARIOS", "NetworkTopology", "Observation",
    "Pmf", "ScenarioConfig", "SerialSystem", "StockPointParams",
    "TrainConfig", "TrainResult", "TrainingDiverged", "TrialResult",
    "ValidationError", "actions_to_orders", "base_stock_policy",
    "build_scenario", "build_topology", "compound_lead_time_demand",
    "convolve", "convolve_all", "da_heuristic", "evaluate_policy",
    "export_report", "load_checkpoint", "load_demand_csv", "load_scenario",
    "load_topology", "make_empirical", "make_point_mass", "make_poisson",
    "make_policy", "make_uniform_poisson_mixture", "mix",
    "orders_to_actions", "policy_map", "run_grid", "run_trial",
    "save_checkpoint", "shang_song_serial", "thin_random_routing",
    "train_imarl", "train_mappo", "train_sarl",
]
