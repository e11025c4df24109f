"""Distributed utility-proportional-fair rate allocation over aggregated carriers."""

from .engine import (
    Carrier,
    RunTrace,
    Scenario,
    ScenarioError,
    Settings,
    User,
    builtin_table1_scenario,
    classify_regime,
    detect_fluctuation,
    run,
)
from .oracle import AllocationMatrix, compare, grid_solve, primal_objective
from .protocol import DecayPolicy, carrier_update, decay_limit, final_allocation, ue_update
from .scenario_io import emit_trace, load_scenario
from .sweep import run_sweep, table1_sweep_spec
from .utility import UtilityFunction, evaluate, inverse_log_slope, log_slope

__all__ = [
    "AllocationMatrix", "Carrier", "DecayPolicy", "RunTrace", "Scenario", "ScenarioError", "Settings",
    "User", "UtilityFunction", "builtin_table1_scenario", "carrier_update", "classify_regime", "compare",
    "decay_limit", "detect_fluctuation", "emit_trace", "evaluate", "final_allocation", "grid_solve",
    "inverse_log_slope", "load_scenario", "log_slope", "primal_objective", "run", "run_sweep",
    "table1_sweep_spec", "ue_update",
]
