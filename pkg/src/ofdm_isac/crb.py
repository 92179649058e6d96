"""Fisher information, delay CRB and the effective-bandwidth requirement.

Powers are in W and subcarrier indices are integers 1..M, so the squared
effective bandwidth carries units of W * index^2; the physical bandwidth
enters through the df^2 factor of the CRB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSensing
from .model import Path, PathSet, SystemConfig, subcarrier_indices


@dataclass(frozen=True)
class SensingRequirement:
    """Per-path effective-bandwidth thresholds and the binding (max) one."""

    per_path: np.ndarray
    threshold: float

    @classmethod
    def from_thresholds(cls, per_path) -> "SensingRequirement":
        per_path = np.asarray(per_path, dtype=np.float64)
        return cls(per_path=per_path, threshold=float(per_path.max()) if per_path.size else 0.0)


def _sensing_weights(power, assignment) -> np.ndarray:
    return np.asarray(power, dtype=np.float64) * np.asarray(assignment, dtype=np.float64)


def squared_effective_bandwidth(power, assignment) -> float:
    """Power-weighted variance of the sensing subcarrier indices.

    ``u`` may be fractional. Returns 0 when no sensing energy exists or the
    energy sits on a single subcarrier.
    """
    w = _sensing_weights(power, assignment)
    total = w.sum()
    if total <= 0 or np.count_nonzero(w) < 2:
        return 0.0
    m = subcarrier_indices(w.size)
    centroid = (w @ m) / total
    return float(w @ (m - centroid) ** 2)


def fractional_term(power, assignment) -> float:
    """(sum w m)^2 / sum w with w = P u; 0 without sensing energy."""
    w = _sensing_weights(power, assignment)
    total = w.sum()
    if total <= 0:
        return 0.0
    return float((w @ subcarrier_indices(w.size)) ** 2 / total)


def quadratic_surrogate(power, assignment, y):
    """2 y sum w m - y^2 sum w, whose maximum over y is ``fractional_term``."""
    w = _sensing_weights(power, assignment)
    a1 = w @ subcarrier_indices(w.size)
    a0 = w.sum()
    y = np.asarray(y, dtype=np.float64)
    return 2 * y * a1 - y**2 * a0


def effective_bandwidth_about(power, assignment, centroid: float) -> float:
    """Quadratic-transform surrogate sum_m P_m u_m (m - y)^2 at a given y."""
    w = _sensing_weights(power, assignment)
    m = subcarrier_indices(w.size)
    return float(w @ (m - centroid) ** 2)


def fim(config: SystemConfig, path: Path, power, assignment) -> np.ndarray:
    """3x3 FIM for (tau, Re b, Im b) of one path from pilot-demodulated data."""
    w = _sensing_weights(power, assignment)
    m = subcarrier_indices(w.size)
    b = path.coefficient
    omega = 2 * np.pi * m * config.subcarrier_spacing
    s0 = w.sum()
    s1 = w @ omega
    s2 = w @ omega**2
    out = np.array([
        [s2 * abs(b) ** 2, s1 * b.imag, -s1 * b.real],
        [s1 * b.imag, s0, 0.0],
        [-s1 * b.real, 0.0, s0],
    ])
    return (2.0 * config.num_rx_antennas / config.noise_power) * out


def pilot_mean(config: SystemConfig, power, assignment, tau: float, coefficient: complex) -> np.ndarray:
    """Noiseless demodulated sensing samples sqrt(P_m N_r) b exp(-j 2 pi m df tau)."""
    w = _sensing_weights(power, assignment)
    m = subcarrier_indices(w.size)
    amp = np.sqrt(w * config.num_rx_antennas)
    return amp * coefficient * np.exp(-2j * np.pi * m * config.subcarrier_spacing * tau)


def log_likelihood(config: SystemConfig, y_tilde, power, assignment, theta) -> float:
    """Gaussian log-likelihood (up to a constant) of theta = (tau, Re b, Im b).

    The demodulated noise has variance sigma^2 per sensing subcarrier; only
    sensing subcarriers contribute.
    """
    tau, re, im = theta
    u = np.asarray(assignment, dtype=np.float64)
    r = np.asarray(y_tilde) - pilot_mean(config, power, assignment, tau, complex(re, im))
    return float(-(u @ np.abs(r) ** 2) / config.noise_power)


def crb_delay(config: SystemConfig, path: Path, power, assignment) -> float:
    """Delay CRB in s^2 via the closed form sigma^2 / (8 N_r |b|^2 pi^2 df^2 W)."""
    w_eff = squared_effective_bandwidth(power, assignment)
    if w_eff <= 0:
        raise InfeasibleSensing("squared effective bandwidth is zero; delay CRB is infinite")
    return crb_from_bandwidth(config, abs(path.coefficient), w_eff)


def crb_from_bandwidth(config: SystemConfig, coefficient_magnitude: float, w_eff: float) -> float:
    if w_eff <= 0:
        return math.inf
    denom = (8 * config.num_rx_antennas * coefficient_magnitude**2 * np.pi**2
             * config.subcarrier_spacing**2 * w_eff)
    return config.noise_power / denom


def sensing_requirement(config: SystemConfig, paths: PathSet) -> SensingRequirement:
    """Effective bandwidth each path needs so that CRB(tau_p) <= J0^2."""
    mags = np.abs(paths.coefficients)
    j0 = config.delay_error_bound
    if math.isinf(j0):
        return SensingRequirement.from_thresholds(np.zeros(mags.size))
    per_path = config.noise_power / (
        8 * config.num_rx_antennas * mags**2 * np.pi**2 * config.subcarrier_spacing**2 * j0**2)
    return SensingRequirement.from_thresholds(per_path)


def range_error(crb: float, speed_of_light: float) -> float:
    """Convert a delay variance (s^2) into a range standard deviation (m)."""
    if crb < 0:
        raise ValueError("CRB must be non-negative")
    return speed_of_light * math.sqrt(crb)


def path_range_bounds(config: SystemConfig, paths: PathSet, power, assignment) -> np.ndarray:
    """c * sqrt(CRB) for every path (inf when the bandwidth is zero)."""
    w_eff = squared_effective_bandwidth(power, assignment)
    crbs = [crb_from_bandwidth(config, abs(b), w_eff) for b in paths.coefficients]
    return np.array([config.speed_of_light * math.sqrt(c) for c in crbs])
