"""Underlay cognitive relaying with signal space diversity: simulation and analysis."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    AnalysisParams,
    ConfigError,
    Policy,
    SystemConfig,
    derive_params,
    operating_point,
    validate_config,
)

__all__ = [
    "AnalysisParams",
    "ConfigError",
    "Policy",
    "SystemConfig",
    "derive_params",
    "operating_point",
    "validate_config",
]
