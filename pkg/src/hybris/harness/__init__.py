from .config import (ConfigError, ExperimentConfig, dump_config, env_config, from_dict,
                     load_config, save_config, to_dict, with_axis_value)
from .report import ReportError, report
from .sweep import MissingCheckpoint, run_oracle, run_sweep
from .train import InfeasibleEverywhere, evaluate_policy, heldout_channels, run_train

__all__ = [
    "ConfigError", "ExperimentConfig", "dump_config", "env_config", "from_dict", "load_config",
    "save_config", "to_dict", "with_axis_value", "ReportError", "report", "MissingCheckpoint",
    "run_oracle", "run_sweep", "InfeasibleEverywhere", "evaluate_policy", "heldout_channels",
    "run_train",
]
