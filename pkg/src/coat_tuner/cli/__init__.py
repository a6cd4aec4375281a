"""Command-line experiment runner and reporting."""

from .config import ExperimentConfig, load_config, parse_config
from .main import cmd_compare, cmd_heatmap, cmd_oracle, cmd_tune, main

__all__ = ["ExperimentConfig", "cmd_compare", "cmd_heatmap", "cmd_oracle", "cmd_tune", "load_config",
           "main", "parse_config"]
