"""Independent reference computations used by the test-suite.

Nothing here imports the optimizer: the brute-force search solves the
sensing sub-problem through its dual (max over the centroid of the greedy
linear-constraint cost) instead of the primal structure enumeration used
in the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar


def greedy_cost(subcarriers, y, threshold, cap):
    """Least power meeting sum_m P_m (m - y)^2 >= threshold with P_m <= cap (fractional knapsack).

    ``y`` may be an array; the result then has the same shape.
    """
    y = np.atleast_1d(np.asarray(y, float))
    d2 = -np.sort(-(np.asarray(subcarriers, float)[None, :] - y[:, None]) ** 2, axis=1)
    reach = cap * np.cumsum(d2, axis=1)
    q = np.argmax(reach >= threshold, axis=1)  # first full-or-fractional position
    ok = reach[:, -1] >= threshold
    rows = np.arange(y.size)
    before = np.where(q > 0, reach[rows, np.maximum(q - 1, 0)], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = cap * q + (threshold - before) / d2[rows, q]
    return np.where(ok & (d2[rows, q] > 0), cost, math.inf)


def min_sensing_power(subcarriers, threshold, cap, grid=4001):
    """min sum P s.t. weighted index variance >= threshold, via max_y greedy_cost(y)."""
    s = np.asarray(sorted(subcarriers), float)
    if threshold <= 0:
        return 0.0
    if s.size < 2 or cap * np.sum((s - s.mean()) ** 2) < threshold:
        return math.inf
    mids = [(a + b) / 2 for a, b in itertools.combinations(s, 2)]
    ys = np.concatenate((np.linspace(s[0], s[-1], grid), mids))
    vals = greedy_cost(s, ys, threshold, cap)
    i = int(np.argmax(vals))
    best = vals[i]
    step = (s[-1] - s[0]) / (grid - 1)
    lo, hi = max(s[0], ys[i] - step), min(s[-1], ys[i] + step)
    if hi > lo:
        res = minimize_scalar(lambda y: -greedy_cost(s, y, threshold, cap)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = max(best, -res.fun)
    return float(best)


def waterfill_rate(gains, budget, noise_power, cap):
    """Maximum sum log2(1 + g P / noise) with sum P <= budget, 0 <= P <= cap."""
    g = np.asarray(gains, float)
    g = g[g > 0]
    if budget <= 0 or g.size == 0:
        return 0.0
    floor = noise_power / g
    if cap * g.size <= budget:
        p = np.full(g.size, cap)
    else:
        level = brentq(lambda w: np.clip(w - floor, 0, cap).sum() - budget,
                       floor.min(), floor.max() + cap, xtol=1e-15, rtol=1e-15)
        p = np.clip(level - floor, 0, cap)
    return float(np.sum(np.log2(1 + g * p / noise_power)))


def brute_force_optimum(gains, noise_power, cap, budget, threshold, eps=0.0):
    """Exhaustive search over all assignments (M <= ~12).

    The budget and threshold are relaxed by ``eps`` so the result bounds any
    waveform accepted as feasible at that tolerance. Returns (rate, sensing set).
    """
    M = len(gains)
    budget = budget * (1 + eps)
    threshold = threshold * (1 - eps)
    best = (-math.inf, None)
    for r in range(0, M + 1):
        for subset in itertools.combinations(range(1, M + 1), r):
            p_s = min_sensing_power(subset, threshold, cap)
            if not p_s <= budget:
                continue
            comm = [gains[m - 1] for m in range(1, M + 1) if m not in subset]
            rate = waterfill_rate(comm, budget - p_s, noise_power, cap)
            if rate > best[0]:
                best = (rate, subset)
    return best


def uniform_power_optimum(gains, noise_power, power, threshold):
    """Best assignment when every subcarrier carries the same fixed power."""
    M = len(gains)
    m = np.arange(1, M + 1)
    best = (-math.inf, None)
    for r in range(0, M + 1):
        for subset in itertools.combinations(range(M), r):
            s = np.asarray(subset, int)
            w = power * np.sum((m[s] - m[s].mean()) ** 2) if s.size else 0.0
            if w < threshold:
                continue
            comm = np.setdiff1d(np.arange(M), s)
            rate = float(np.sum(np.log2(1 + np.asarray(gains)[comm] * power / noise_power)))
            if rate > best[0]:
                best = (rate, tuple(int(i) + 1 for i in s))
    return best
