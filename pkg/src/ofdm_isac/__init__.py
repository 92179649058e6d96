"""Bistatic OFDM sensing-and-communication waveform optimisation."""

__version__ = "0.1.0"

from .crb import crb_delay, fim, sensing_requirement, squared_effective_bandwidth
from .errors import (ConfigError, EmptySensingSet, FewerPeaksThanPaths, InfeasibleSensing,
                     IsacError, LambdaZero)
from .model import (ChannelResponse, Path, PathSet, SystemConfig, Waveform, cdr,
                    channel_response)
from .optimizer import OptimizationResult, OptimizerConfig, optimize
from .scenario import Scenario, default_config, default_scenario

__all__ = [
    "ChannelResponse", "ConfigError", "EmptySensingSet", "FewerPeaksThanPaths", "InfeasibleSensing",
    "IsacError", "LambdaZero", "OptimizationResult", "OptimizerConfig", "Path", "PathSet",
    "Scenario", "SystemConfig", "Waveform", "cdr", "channel_response", "crb_delay",
    "default_config", "default_scenario", "fim", "optimize", "sensing_requirement",
    "squared_effective_bandwidth",
]
