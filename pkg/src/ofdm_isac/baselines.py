"""Comparison allocators: SAUPA, RSAPA and RSAUPA.

SAUPA keeps uniform power and optimises only the assignment; the two random
variants draw a fixed fraction of sensing subcarriers and either optimise
the power (RSAPA) or keep it uniform (RSAUPA).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .crb import SensingRequirement, sensing_requirement, squared_effective_bandwidth
from .errors import ConfigError, InfeasibleSensing
from .model import (ChannelResponse, PathSet, SystemConfig, Waveform, communication_rate,
                    subcarrier_indices)
from .optimizer import allocate_power, assignment_update, centroid


class BaselineKind(enum.Enum):
    SAUPA = "SAUPA"
    RSAPA = "RSAPA"
    RSAUPA = "RSAUPA"


@dataclass(frozen=True)
class BaselineSpec:
    kind: BaselineKind
    sensing_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.sensing_fraction < 1.0:
            raise ConfigError("sensing_fraction must lie in (0, 1)")


def uniform_power(config: SystemConfig) -> np.ndarray:
    p = min(config.per_subcarrier_cap, config.total_budget / config.num_subcarriers)
    return np.full(config.num_subcarriers, p)


def random_assignment(num_subcarriers: int, fraction: float, rng_seed) -> np.ndarray:
    """ceil(fraction*M) sensing subcarriers drawn without replacement."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError("sensing_fraction must lie in (0, 1)")
    rng = np.random.default_rng(rng_seed)
    n = math.ceil(fraction * num_subcarriers)
    u = np.zeros(num_subcarriers, dtype=np.int8)
    u[rng.choice(num_subcarriers, size=n, replace=False)] = 1
    return u


def _threshold(config, paths, requirement):
    return (requirement or sensing_requirement(config, paths)).threshold


def saupa(channel: ChannelResponse, paths: PathSet, config: SystemConfig,
          requirement: SensingRequirement | None = None, max_iterations: int = 200) -> Waveform:
    """Optimised assignment under frozen uniform power.

    The assignment rule is applied with the power frozen while the bandwidth
    price is located by bisection on a log scale (the rule is monotone in the
    price once the centroid settles). The best feasible assignment seen is
    kept, then pruned: sensing subcarriers whose removal keeps the bandwidth
    above the threshold go back to communication, highest rate first. If no
    assignment is feasible, the one with the largest bandwidth is returned.
    """
    thr = _threshold(config, paths, requirement)
    M = config.num_subcarriers
    power = uniform_power(config)
    gains, noise = channel.gains, config.noise_power
    if thr <= 0 or power[0] <= 0:
        return Waveform(np.zeros(M, np.int8), power)

    def assign(mu):
        y = (M + 1) / 2.0
        u = assignment_update(power, gains, y, mu, noise)
        for _ in range(20):  # centroid fixed point
            if u.sum() == 0:
                break
            y_new = centroid(power, u)
            if abs(y_new - y) < 1e-9:
                break
            y = y_new
            u = assignment_update(power, gains, y, mu, noise)
        return u

    m = subcarrier_indices(M)
    d_max = ((M - 1) / 2.0) ** 2
    # below lo nothing is sensed; at hi every subcarrier wants to sense
    rates = np.log2(1 + gains * power / noise)
    lo = max(rates.min(), 1e-300) / (power[0] * d_max) * 1e-3
    hi = max(rates.max(), 1e-300) / (power[0] * np.min((m - (M + 1) / 2.0) ** 2 + 0.25)) * 1e3
    best, widest = None, None
    for _ in range(max_iterations):
        mu = math.sqrt(lo * hi)
        u = assign(mu)
        w = squared_effective_bandwidth(power, u)
        if widest is None or w > widest[0]:
            widest = (w, u)
        if w >= thr:
            rate = communication_rate(gains, power, u, noise)
            if best is None or rate > best[0]:
                best = (rate, u)
            hi = mu
        else:
            lo = mu
        if hi / lo < 1 + 1e-9:
            break
    if best is None:
        return Waveform(widest[1], power)
    return Waveform(_prune(best[1], power[0], rates, thr), power)


def _prune(u, p, rates, thr):
    """Hand back sensing subcarriers, highest rate first, while the bandwidth stays >= thr."""
    u = u.copy()
    m = subcarrier_indices(u.size).astype(np.float64)
    while True:
        on = u == 1
        n = int(on.sum())
        if n <= 2:
            return u
        s1, s2 = m[on].sum(), (m[on] ** 2).sum()
        w_without = p * ((s2 - m**2) - (s1 - m) ** 2 / (n - 1))
        ok = on & (w_without >= thr)
        if not ok.any():
            return u
        score = np.where(ok, rates, -np.inf)
        # highest rate, then least bandwidth given up
        cand = np.flatnonzero(score == score.max())
        u[cand[np.argmax(w_without[cand])]] = 0


def rsapa(channel: ChannelResponse, paths: PathSet, config: SystemConfig, rng_seed,
          sensing_fraction: float = 0.5, requirement: SensingRequirement | None = None) -> Waveform:
    """Random assignment, optimised power."""
    thr = _threshold(config, paths, requirement)
    u = random_assignment(config.num_subcarriers, sensing_fraction, rng_seed)
    _check_reachable(u, thr, config)
    wf, _ = allocate_power(channel, u, config, thr)
    return wf


def rsaupa(channel: ChannelResponse, paths: PathSet, config: SystemConfig, rng_seed,
           sensing_fraction: float = 0.5, requirement: SensingRequirement | None = None) -> Waveform:
    """Random assignment (same draw as ``rsapa`` for the same seed), uniform power."""
    thr = _threshold(config, paths, requirement)
    u = random_assignment(config.num_subcarriers, sensing_fraction, rng_seed)
    _check_reachable(u, thr, config)
    return Waveform(u, uniform_power(config))


def _check_reachable(u, thr, config):
    if thr <= 0:
        return
    full = np.where(u == 1, config.per_subcarrier_cap, 0.0)
    if squared_effective_bandwidth(full, u) < thr:
        raise InfeasibleSensing("random sensing set cannot meet the threshold even at full power")


def run_baseline(kind: BaselineKind, channel, paths, config, rng_seed=None,
                 sensing_fraction: float = 0.5, requirement=None) -> Waveform:
    if kind is BaselineKind.SAUPA:
        return saupa(channel, paths, config, requirement)
    if kind is BaselineKind.RSAPA:
        return rsapa(channel, paths, config, rng_seed, sensing_fraction, requirement)
    return rsaupa(channel, paths, config, rng_seed, sensing_fraction, requirement)
