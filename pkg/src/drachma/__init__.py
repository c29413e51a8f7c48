"""Analytic cavity-resetting readout pulses and their verification toolkit."""

__version__ = "0.1.0"

from .model import (
    Config,
    ConfigError,
    DetectionChain,
    ResonatorParams,
    StateBranch,
    TrialFunction,
    Waveform,
    load_bundled,
    load_config,
)

__all__ = [
    "Config",
    "ConfigError",
    "DetectionChain",
    "ResonatorParams",
    "StateBranch",
    "TrialFunction",
    "Waveform",
    "load_bundled",
    "load_config",
]
