"""Seeded random scenarios.

The delay, gain, phase and angle distributions are defined here (they are
not taken from any reference setup): delays uniform in [0.05, 0.95]/df,
magnitudes log-uniform in [0.1, 1], phases uniform, and AoAs whose cosines
lie on a lattice of spacing 2/N_r with a random common offset. The lattice
keeps the steering vectors mutually orthogonal, which is the regime in
which per-path beamforming isolates each path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import Path, PathSet, SystemConfig


@dataclass(frozen=True)
class Scenario:
    config: SystemConfig
    paths: PathSet
    rng_seed: int
    label: str = ""


def random_paths(config: SystemConfig, num_paths: int, rng: np.random.Generator,
                 magnitude_range=(0.1, 1.0), delay_fraction=(0.05, 0.95),
                 aoa_lattice: bool = True) -> PathSet:
    n_r = config.num_rx_antennas
    step = 2.0 / n_r
    if aoa_lattice:
        # lattice points strictly inside (-1, 1) with margin so the main lobe stays in range
        offset = rng.uniform(0.0, step)
        grid = -1.0 + offset + step * np.arange(n_r)
        grid = grid[(grid > -1 + 0.5 * step) & (grid < 1 - 0.5 * step)]
        if grid.size < num_paths:
            raise ConfigError(f"only {grid.size} separable AoAs for N_r={n_r}; need {num_paths}")
        cosines = rng.choice(grid, size=num_paths, replace=False)
    else:
        cosines = _separated_cosines(num_paths, step, rng)
    lo, hi = magnitude_range
    mags = np.exp(rng.uniform(math.log(lo), math.log(hi), size=num_paths))
    phases = rng.uniform(0.0, 2 * np.pi, size=num_paths)
    delays = rng.uniform(*delay_fraction, size=num_paths) / config.subcarrier_spacing
    paths = [Path(complex(mag * np.exp(1j * ph)), float(tau), float(np.arccos(c)))
             for mag, ph, tau, c in zip(mags, phases, delays, cosines)]
    return PathSet(paths)


def _separated_cosines(num_paths, step, rng, max_tries=10_000):
    chosen: list[float] = []
    for _ in range(max_tries):
        c = rng.uniform(-1 + 0.5 * step, 1 - 0.5 * step)
        if all(abs(c - d) >= step for d in chosen):
            chosen.append(c)
            if len(chosen) == num_paths:
                return np.array(chosen)
    raise ConfigError("could not place separated AoAs")


def default_config(**overrides) -> SystemConfig:
    """M=1024, df=150 kHz, N_r=16, noise 1e-3 W, P0=0.04 W, c=3e8 m/s."""
    base = SystemConfig(num_subcarriers=1024, subcarrier_spacing=150e3, num_rx_antennas=16,
                        noise_power=1e-3, per_subcarrier_cap=4e-2, total_budget=10.0,
                        delay_error_bound=0.05 / 3e8, speed_of_light=3e8)
    return base.updated(**overrides) if overrides else base


def default_scenario(seed: int, num_paths: int = 6, config: SystemConfig | None = None,
                     **path_kwargs) -> Scenario:
    config = config or default_config()
    rng = np.random.default_rng(seed)
    paths = random_paths(config, num_paths, rng, **path_kwargs)
    paths.validate(config)
    return Scenario(config, paths, int(seed), label=f"default-{seed}")
