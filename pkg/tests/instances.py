"""Small random instances shared by the optimizer, baseline and acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from oracles import brute_force_optimum
from ofdm_isac.crb import sensing_requirement
from ofdm_isac.model import ChannelResponse, PathSet, SystemConfig, channel_response
from ofdm_isac.scenario import random_paths


@dataclass(frozen=True)
class SmallInstance:
    seed: int
    config: SystemConfig
    paths: PathSet
    channel: ChannelResponse
    threshold: float
    optimum: float
    optimal_set: tuple


def small_instance(seed: int, num_subcarriers: int = 8, eps: float = 1e-3,
                   max_draws: int = 100) -> SmallInstance:
    """Random M=8 scenario with 1-2 paths whose exhaustive optimum is feasible.

    The bound is set so the weakest path needs a random fraction of the
    largest bandwidth the band can offer; draws whose optimum is infeasible
    are discarded.
    """
    M = num_subcarriers
    rng = np.random.default_rng(1000 + seed)
    for _ in range(max_draws):
        base = SystemConfig(num_subcarriers=M, num_rx_antennas=4, total_budget=rng.uniform(0.1, 0.28))
        paths = random_paths(base, int(rng.integers(1, 3)), rng)
        # edge-heavy all-cap bandwidth of an 8-subcarrier band is about 42 P0
        w_target = rng.uniform(0.1, 0.9) * base.per_subcarrier_cap * (M - 1) ** 2 * 6 / 7
        b_min = np.abs(paths.coefficients).min()
        j0 = math.sqrt(base.noise_power / (8 * base.num_rx_antennas * b_min**2 * np.pi**2
                                           * base.subcarrier_spacing**2 * w_target))
        cfg = base.updated(delay_error_bound=j0)
        ch = channel_response(cfg, paths)
        thr = sensing_requirement(cfg, paths).threshold
        opt, subset = brute_force_optimum(ch.gains, cfg.noise_power, cfg.per_subcarrier_cap,
                                          cfg.total_budget, thr, eps)
        if math.isfinite(opt):
            return SmallInstance(seed, cfg, paths, ch, thr, opt, subset)
    raise RuntimeError(f"no feasible draw for seed {seed}")
