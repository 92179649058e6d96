"""Domain types, ULA steering, multipath channel synthesis and data rate.

Subcarriers are numbered m = 1..M in every formula; arrays are stored
0-based, so ``subcarrier_indices(M)[i] == i + 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 3e8  # m/s


def subcarrier_indices(num_subcarriers: int) -> np.ndarray:
    """Integer subcarrier indices 1..M as float64."""
    return np.arange(1, num_subcarriers + 1, dtype=np.float64)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Global constants of the bistatic OFDM link.

    Attributes
    ----------
    num_subcarriers : int
        Number of OFDM subcarriers M.
    subcarrier_spacing : float
        Subcarrier spacing in Hz.
    num_rx_antennas : int
        Receive ULA size N_r (half-wavelength spacing).
    noise_power : float
        Per-antenna noise variance in W.
    per_subcarrier_cap : float
        Per-subcarrier power cap P0 in W.
    total_budget : float
        Total transmit power budget P_req in W.
    delay_error_bound : float
        Maximum tolerable delay standard deviation J0 in s (``inf`` disables
        the sensing constraint).
    carrier_frequency : float or None
        Recorded for provenance only; unused by any computation.
    speed_of_light : float
        Propagation speed in m/s.
    """

    num_subcarriers: int = 1024
    subcarrier_spacing: float = 150e3
    num_rx_antennas: int = 16
    noise_power: float = 1e-3
    per_subcarrier_cap: float = 4e-2
    total_budget: float = 10.0
    delay_error_bound: float = 0.05 / SPEED_OF_LIGHT
    carrier_frequency: float | None = None
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 2:
            raise ConfigError(f"num_subcarriers must be an integer >= 2, got {self.num_subcarriers}")
        if int(self.num_rx_antennas) != self.num_rx_antennas or self.num_rx_antennas < 1:
            raise ConfigError(f"num_rx_antennas must be a positive integer, got {self.num_rx_antennas}")
        for name in ("subcarrier_spacing", "noise_power", "per_subcarrier_cap",
                     "delay_error_bound", "speed_of_light"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not (self.total_budget >= 0 and math.isfinite(self.total_budget)):
            raise ConfigError(f"total_budget must be finite and non-negative, got {self.total_budget}")
        if self.total_budget > self.num_subcarriers * self.per_subcarrier_cap:
            warnings.warn(
                f"total_budget {self.total_budget} W exceeds M*P0 = "
                f"{self.num_subcarriers * self.per_subcarrier_cap} W; the budget can never bind",
                stacklevel=3,
            )

    @property
    def bandwidth(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing

    @property
    def max_delay(self) -> float:
        """Length of the unambiguous delay interval [0, 1/df)."""
        return 1.0 / self.subcarrier_spacing

    def with_range_error_bound(self, range_error_m: float) -> "SystemConfig":
        return replace(self, delay_error_bound=range_error_m / self.speed_of_light)

    def updated(self, **overrides) -> "SystemConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown SystemConfig field(s): {sorted(unknown)}")
        return replace(self, **overrides)


@dataclass(frozen=True)
class Path:
    coefficient: complex
    delay: float
    aoa: float

    def __post_init__(self):
        object.__setattr__(self, "coefficient", complex(self.coefficient))
        if not abs(self.coefficient) > 0:
            raise ConfigError("path coefficient must be non-zero")
        if not 0.0 < self.aoa < math.pi:
            raise ConfigError(f"AoA must lie in (0, pi), got {self.aoa}")
        if self.delay < 0:
            raise ConfigError(f"delay must be non-negative, got {self.delay}")

    def check_delay(self, config: SystemConfig) -> None:
        if not self.delay < config.max_delay:
            raise ConfigError(
                f"delay {self.delay} s outside the unambiguous range [0, {config.max_delay})")


@dataclass(frozen=True)
class PathSet:
    paths: tuple[Path, ...]

    def __init__(self, paths: Iterable[Path]):
        paths = tuple(paths)
        if not paths:
            raise ConfigError("a PathSet needs at least one path")
        object.__setattr__(self, "paths", paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i) -> Path:
        return self.paths[i]

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([p.coefficient for p in self.paths], dtype=np.complex128)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths], dtype=np.float64)

    @property
    def aoas(self) -> np.ndarray:
        return np.array([p.aoa for p in self.paths], dtype=np.float64)

    def min_aoa_separation(self) -> float:
        """Smallest pairwise |cos(psi_p) - cos(psi_q)| (inf for one path)."""
        c = np.cos(self.aoas)
        if c.size < 2:
            return math.inf
        diff = np.abs(c[:, None] - c[None, :])
        return float(diff[np.triu_indices(c.size, 1)].min())

    def is_separated(self, num_rx_antennas: int) -> bool:
        return self.min_aoa_separation() >= 2.0 / num_rx_antennas - 1e-12

    def validate(self, config: SystemConfig, require_separation: bool = True) -> None:
        for p in self.paths:
            p.check_delay(config)
        if require_separation and not self.is_separated(config.num_rx_antennas):
            raise ConfigError(
                f"AoAs not separated by 2/N_r in cos(psi): min separation "
                f"{self.min_aoa_separation():.4g} < {2.0 / config.num_rx_antennas:.4g}")


@dataclass(frozen=True)
class Waveform:
    """Binary subcarrier assignment ``u`` (1 = sensing) and powers ``power``."""

    assignment: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.assignment)
        p = np.asarray(self.power, dtype=np.float64)
        if u.shape != p.shape or u.ndim != 1:
            raise ConfigError("assignment and power must be equal-length vectors")
        if not np.all((u == 0) | (u == 1)):
            raise ConfigError("assignment must be strictly binary")
        object.__setattr__(self, "assignment", _readonly(u.astype(np.int8)))
        object.__setattr__(self, "power", _readonly(p.copy()))

    @property
    def num_subcarriers(self) -> int:
        return self.assignment.size

    @property
    def sensing_mask(self) -> np.ndarray:
        return self.assignment == 1

    @property
    def num_sensing(self) -> int:
        return int(self.assignment.sum())

    def validate(self, config: SystemConfig, tol: float = 1e-9) -> None:
        """Raise ConfigError when box or budget constraints are violated."""
        if self.num_subcarriers != config.num_subcarriers:
            raise ConfigError("waveform length does not match num_subcarriers")
        if np.any(self.power < 0) or np.any(self.power > config.per_subcarrier_cap * (1 + tol)):
            raise ConfigError("power outside [0, P0]")
        if self.power.sum() > config.total_budget * (1 + tol) + tol * config.per_subcarrier_cap:
            raise ConfigError("total power exceeds budget")


@dataclass(frozen=True)
class ChannelResponse:
    """Per-subcarrier channel vectors ``h`` (M x N_r) and cached ``gains``."""

    h: np.ndarray
    gains: np.ndarray = field(default=None)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.complex128)
        if h.ndim != 2:
            raise ConfigError("channel must be an M x N_r array")
        gains = np.sum(np.abs(h) ** 2, axis=1) if self.gains is None else np.asarray(self.gains, float)
        object.__setattr__(self, "h", _readonly(h.copy()))
        object.__setattr__(self, "gains", _readonly(gains.copy()))

    @classmethod
    def from_gains(cls, gains: Sequence[float]) -> "ChannelResponse":
        """Single-antenna channel with real amplitudes sqrt(gains)."""
        g = np.asarray(gains, dtype=np.float64)
        return cls(h=np.sqrt(g)[:, None].astype(np.complex128), gains=g)


def steering_vector(aoa: float, num_antennas: int) -> np.ndarray:
    """ULA response ``exp(-j*pi*n*cos(aoa))`` for n = 0..N-1."""
    n = np.arange(num_antennas)
    return np.exp(-1j * np.pi * n * np.cos(aoa))


def steering_matrix(aoas: Sequence[float], num_antennas: int) -> np.ndarray:
    """Columns are steering vectors; shape (N, len(aoas))."""
    n = np.arange(num_antennas)[:, None]
    return np.exp(-1j * np.pi * n * np.cos(np.asarray(aoas, float))[None, :])


def channel_response(config: SystemConfig, paths: PathSet) -> ChannelResponse:
    m = subcarrier_indices(config.num_subcarriers)
    phase = np.exp(-2j * np.pi * np.outer(m, paths.delays) * config.subcarrier_spacing)  # M x P
    h = (phase * paths.coefficients[None, :]) @ steering_matrix(paths.aoas, config.num_rx_antennas).T
    return ChannelResponse(h=h)


def cdr(config: SystemConfig, channel: ChannelResponse, waveform: Waveform) -> float:
    """Sum spectral efficiency (bits/s/Hz) over communication subcarriers."""
    return communication_rate(channel.gains, waveform.power, waveform.assignment, config.noise_power)


def communication_rate(gains, power, assignment, noise_power) -> float:
    comm = np.asarray(assignment) == 0
    snr = np.asarray(gains)[comm] * np.asarray(power)[comm] / noise_power
    return float(np.sum(np.log2(1.0 + snr)))
