"""Deterministic simulator of one blockchain- and SDN-orchestrated fog domain."""

__version__ = "0.1.0"

from .scenario import ConfigError, ScenarioConfig, config_from_dict, load_scenario  # noqa: E402
from .simulation import DomainSimulation, RunResult, run_scenario, write_artifacts  # noqa: E402

__all__ = [
    "ConfigError",
    "DomainSimulation",
    "RunResult",
    "ScenarioConfig",
    "config_from_dict",
    "load_scenario",
    "run_scenario",
    "write_artifacts",
]
