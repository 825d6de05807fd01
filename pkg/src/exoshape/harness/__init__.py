"""Configuration loading and the ``exoshape`` command line."""

from .cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_OK, build_parser, main
from .config import ConfigError, RunConfig, load_config, parse_config

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "main",
    "build_parser",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_DATA",
    "EXIT_DIVERGED",
]
