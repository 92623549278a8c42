"""Joint beam pointing, subchannel assignment, and power allocation for
multi-satellite LEO downlinks, with matching-based heuristics, a convex
power stage, and brute-force references for tiny instances."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    InfeasibleAllocationError,
    InvalidGeometryError,
    OracleBoundsError,
    ScenarioError,
    SolverError,
)
from .framework import (
    ALGORITHMS,
    FrameworkConfig,
    MetricsRow,
    RunRecord,
    config_from_scenario,
    initialize_allocation,
    run_framework,
    run_sweep,
)
from .kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .netmodel import (
    Allocation,
    MetricsReport,
    Network,
    RadioConfig,
    alpha_utility,
    check_feasibility,
    evaluate_allocation,
    jain_index,
    metrics,
    objective,
)
from .power_control import SolverConfig, run_sca
from .scenario import (
    BuiltScenario,
    ResultsBundle,
    Scenario,
    build_network,
    canonical_text,
    emit_results,
    load_scenario,
    save_scenario,
    scenario_hash,
)

__all__ = [
    "ALGORITHMS",
    "Allocation",
    "BuiltScenario",
    "ConfigurationError",
    "FrameworkConfig",
    "InfeasibleAllocationError",
    "InvalidGeometryError",
    "KERNEL_IMPLEMENTATION",
    "MetricsReport",
    "MetricsRow",
    "Network",
    "OracleBoundsError",
    "RadioConfig",
    "ResultsBundle",
    "RunRecord",
    "Scenario",
    "ScenarioError",
    "SolverConfig",
    "SolverError",
    "alpha_utility",
    "build_network",
    "canonical_text",
    "check_feasibility",
    "config_from_scenario",
    "emit_results",
    "evaluate_allocation",
    "initialize_allocation",
    "jain_index",
    "load_scenario",
    "metrics",
    "objective",
    "run_framework",
    "run_sca",
    "run_sweep",
    "save_scenario",
    "scenario_hash",
    "__version__",
]
