from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .data import gen_synthetic_blobs, load_csv, save_csv
from .experiment import AttackReport, StageError, emit_report, replay, run_experiment
from .io import load_matrix, load_membership, load_scores, save_matrix

__all__ = [
    "AttackReport", "ConfigError", "ExperimentConfig", "StageError", "emit_report", "gen_synthetic_blobs",
    "load_config", "load_csv", "load_matrix", "load_membership", "load_scores", "parse_config", "replay",
    "run_experiment", "save_csv", "save_matrix",
]
