from .config import ExperimentConfig, load_config, parse_config
from .experiment import ResultStore, run_experiment, save_store
from .metrics import AggregateCurve, complexity_slope, progress_curve, solvability_profile

__all__ = [
    "AggregateCurve",
    "ExperimentConfig",
    "ResultStore",
    "complexity_slope",
    "load_config",
    "parse_config",
    "progress_curve",
    "run_experiment",
    "save_store",
    "solvability_profile",
]
