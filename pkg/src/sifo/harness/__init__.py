"""Config-driven experiment runner and CLI."""
from .config import ExperimentConfig, OverheadModel, SCHEMES, TINY, config_from_dict, load_config
from .records import CSV_HEADER, MetricsRecord, emit_csv, emit_plot_script, parse_csv, parse_csv_text
from .runner import (ADAPTATION_MODES, KEY_COORDINATES, Workspace, crossing_budget, mean_by, run_ablation,
                     run_effective_rate, run_loco)

__all__ = [
    "ExperimentConfig", "OverheadModel", "SCHEMES", "TINY", "config_from_dict", "load_config",
    "CSV_HEADER", "MetricsRecord", "emit_csv", "emit_plot_script", "parse_csv", "parse_csv_text",
    "ADAPTATION_MODES", "KEY_COORDINATES", "Workspace", "crossing_budget", "mean_by",
    "run_ablation", "run_effective_rate", "run_loco",
]
