"""Experiment harness: TOML configs, seeded pipelines, CSV/JSON results."""

from .config import ConfigError, RunConfig, parse_config
from .records import NumericalFailure, RunRecord, write_csv, write_manifest
from .seeds import substream

__all__ = [
    "ConfigError",
    "NumericalFailure",
    "RunConfig",
    "RunRecord",
    "parse_config",
    "substream",
    "write_csv",
    "write_manifest",
]
