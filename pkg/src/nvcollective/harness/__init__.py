"""Config parsing, validation and the cell-parallel experiment runner."""

from .config import (
    EXPERIMENTS,
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    validate,
)
from .runner import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, RunResult, run

__all__ = [
    "EXPERIMENTS", "SCHEMA_VERSION", "ConfigError", "ExperimentConfig", "load_config",
    "parse_config", "validate", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_OK", "RunResult", "run",
]
