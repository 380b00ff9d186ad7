"""Fluid stochastic Petri net simulation of a speculative ILP processor pipeline."""

from .experiments import (
    ReplicationStats,
    SimResult,
    SweepTable,
    additional_vp_speedup,
    compute_speedup,
    run_replications,
    run_simulation,
    scalar_baseline,
    sweep,
    vp_speedup_bound,
)
from .kernel import ConsistencyError, SimulationError
from .pipeline import ConfigError, PipelineNet, SimConfig, build_pipeline_net

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConsistencyError",
    "PipelineNet",
    "ReplicationStats",
    "SimConfig",
    "SimResult",
    "SimulationError",
    "SweepTable",
    "additional_vp_speedup",
    "build_pipeline_net",
    "compute_speedup",
    "run_replications",
    "run_simulation",
    "scalar_baseline",
    "sweep",
    "vp_speedup_bound",
]
