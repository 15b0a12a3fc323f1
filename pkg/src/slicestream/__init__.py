"""QoE-driven video streaming over a sliced vehicular downlink."""

__version__ = "0.1.0"

from .model import ConfigError, ScenarioConfig, VideoCatalog, load_config, validate_config  # noqa: E402
from .harness import ExperimentPlan, run_cell, run_plan, run_slot_loop  # noqa: E402

__all__ = [
    "ConfigError",
    "ExperimentPlan",
    "ScenarioConfig",
    "VideoCatalog",
    "load_config",
    "run_cell",
    "run_plan",
    "run_slot_loop",
    "validate_config",
    "__version__",
]
