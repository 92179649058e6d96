"""Joint subcarrier assignment and power allocation by block coordinate descent.

The loop maximises the sum rate of communication subcarriers subject to a
total power budget, a per-subcarrier cap and a lower bound on the squared
effective bandwidth of the sensing subcarriers. Each sweep performs
water-filling on communication subcarriers, a minimum-power sensing
allocation around the spectral centroid, the centroid update, the binary
assignment rule and a projected subgradient step on the two multipliers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .crb import (SensingRequirement, effective_bandwidth_about, sensing_requirement,
                  squared_effective_bandwidth)
from .errors import ConfigError, EmptySensingSet, LambdaZero
from .model import (ChannelResponse, PathSet, SystemConfig, Waveform, communication_rate,
                    subcarrier_indices)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class OptimizerConfig:
    """Iteration limits, step sizes and tolerances of the BCD loop.

    ``step_lambda`` and ``step_mu`` are dimensionless multipliers on the
    auto-normalised initial step sizes; the k-th step is divided by sqrt(k)
    when ``step_decay == "sqrt"``.
    """

    max_iterations: int = 2000
    step_lambda: float = 1.0
    step_mu: float = 1.0
    step_decay: str = "sqrt"
    eps_lag: float = 1e-7
    eps_feas: float = 1e-3
    tie_epsilon: float = 0.0
    patience: int = 10
    init_sensing_fraction: float = 0.1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        for name in ("step_lambda", "step_mu", "eps_lag", "eps_feas"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.tie_epsilon < 0:
            raise ConfigError("tie_epsilon must be >= 0")
        if self.step_decay not in ("sqrt", "constant"):
            raise ConfigError("step_decay must be 'sqrt' or 'constant'")
        if not 0 <= self.init_sensing_fraction <= 1:
            raise ConfigError("init_sensing_fraction must lie in [0, 1]")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")

    def decay(self, k: int) -> float:
        return 1.0 / math.sqrt(k) if self.step_decay == "sqrt" else 1.0


class TraceRow(NamedTuple):
    iteration: int
    cdr: float
    effective_bandwidth: float
    dual_lambda: float
    dual_mu: float
    num_sensing: int
    feasible: bool


@dataclass
class OptimizerState:
    waveform: Waveform
    centroid: float
    dual_lambda: float
    dual_mu: float
    iteration: int = 0
    last_lagrangian: float = -math.inf
    budget_feasible: bool = False
    sensing_feasible: bool = False


@dataclass
class OptimizationResult:
    waveform: Waveform
    achieved_cdr: float
    achieved_effective_bandwidth: float
    feasible: bool
    iterations_used: int
    threshold: float
    trace: list[TraceRow] = field(default_factory=list)
    final_state: OptimizerState | None = None

    def write_trace_csv(self, path) -> None:
        write_trace_csv(self.trace, path)


class SensingUpdate(NamedTuple):
    power: np.ndarray
    q_bar: int
    feasible: bool


# ---------------------------------------------------------------------------
# closed-form block updates


def update_centroid(waveform: Waveform) -> float:
    """Power-weighted mean index of the sensing subcarriers."""
    return centroid(waveform.power, waveform.assignment)


def centroid(power, assignment) -> float:
    w = np.asarray(power, dtype=np.float64) * np.asarray(assignment, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise EmptySensingSet("no sensing power; the spectral centroid is undefined")
    return float(w @ subcarrier_indices(w.size) / total)


def water_filling(gains, dual_lambda: float, noise_power: float, cap: float) -> np.ndarray:
    """Capped water-filling ``[1/(lambda ln2) - noise/gain]_0^cap``.

    ``dual_lambda == 0`` is the infinite-water-level limit (every subcarrier
    with positive gain at the cap).
    """
    gains = np.asarray(gains, dtype=np.float64)
    out = np.zeros_like(gains)
    pos = gains > 0
    if dual_lambda <= 0:
        out[pos] = cap
        return out
    level = 1.0 / (dual_lambda * LN2)
    out[pos] = np.clip(level - noise_power / gains[pos], 0.0, cap)
    return out


def comm_power_update(channel: ChannelResponse, dual_lambda: float, config: SystemConfig,
                      assignment=None) -> np.ndarray:
    """Water-filling powers on communication subcarriers (zeros elsewhere)."""
    if dual_lambda <= 0 and np.any(channel.gains > 0):
        raise LambdaZero("water level is unbounded for lambda = 0")
    p = water_filling(channel.gains, dual_lambda, config.noise_power, config.per_subcarrier_cap)
    if assignment is not None:
        p[np.asarray(assignment) == 1] = 0.0
    return p


def lambda_for_budget(gains, budget: float, noise_power: float, cap: float) -> float:
    """Price lambda at which water-filling over all subcarriers spends ``budget``.

    Returns the largest lambda that saturates every subcarrier when the budget
    exceeds what the caps can absorb, and ``inf`` for a zero budget.
    """
    gains = np.asarray(gains, dtype=np.float64)
    pos = gains > 0
    if budget <= 0 or not pos.any():
        return math.inf
    floor = noise_power / gains[pos]
    top = cap + floor.max()
    if cap * pos.sum() <= budget:
        return 1.0 / (top * LN2)

    def spent(level):
        return np.clip(level - floor, 0.0, cap).sum() - budget

    level = brentq(spent, floor.min(), top, xtol=1e-15, rtol=1e-14, maxiter=500)
    return 1.0 / (level * LN2)


def sensing_power_update(y: float, assignment, threshold: float, config: SystemConfig) -> SensingUpdate:
    """Greedy full-power sensing allocation around a fixed centroid ``y``.

    Sensing subcarriers are visited by decreasing (m - y)^2 (ascending index on
    ties); the first ``q_bar - 1`` get the cap, the ``q_bar``-th the residual
    and the rest zero. When even all-cap power cannot reach ``threshold`` the
    update returns every sensing subcarrier at the cap with ``feasible=False``.
    """
    u = np.asarray(assignment)
    cap = config.per_subcarrier_cap
    power = np.zeros(u.size)
    idx = np.flatnonzero(u == 1)
    if idx.size == 0:
        raise EmptySensingSet("sensing power update needs at least one sensing subcarrier")
    if threshold <= 0:
        return SensingUpdate(power, 0, True)
    d2 = (idx + 1.0 - y) ** 2
    order = np.lexsort((idx, -d2))
    contrib = np.cumsum(d2[order] * cap)
    q = int(np.searchsorted(contrib, threshold, side="left"))  # 0-based position of q_bar
    if q >= idx.size:
        power[idx] = cap
        return SensingUpdate(power, idx.size + 1, False)
    before = contrib[q - 1] if q > 0 else 0.0
    power[idx[order[:q]]] = cap
    power[idx[order[q]]] = (threshold - before) / d2[order[q]]
    return SensingUpdate(power, q + 1, True)


def min_power_sensing_allocation(assignment, threshold: float, cap: float) -> tuple[np.ndarray, bool]:
    """Least total power on the sensing set whose effective bandwidth reaches ``threshold``.

    The optimum puts the cap on the outermost sensing subcarriers on both
    sides of its own centroid y*, at most one fractional subcarrier per side,
    both at the same distance from y* when two are fractional. This is the
    greedy cap-then-residual rule evaluated at a self-consistent centroid.
    All such structures are enumerated with prefix sums and the cheapest
    feasible one is kept. Returns ``(power, feasible)``; when infeasible every
    sensing subcarrier is set to the cap.
    """
    u = np.asarray(assignment)
    power = np.zeros(u.size)
    if threshold <= 0:
        return power, True
    idx = np.flatnonzero(u == 1)
    n = idx.size
    s = idx + 1.0
    if n < 2 or cap * float(np.sum((s - s.mean()) ** 2)) < threshold * (1 - 1e-12):
        power[idx] = cap
        return power, False

    left1 = np.concatenate(([0.0], np.cumsum(s)))
    left2 = np.concatenate(([0.0], np.cumsum(s**2)))
    right1 = np.concatenate(([0.0], np.cumsum(s[::-1])))
    right2 = np.concatenate(([0.0], np.cumsum(s[::-1] ** 2)))
    big = threshold

    k_max = min(4, n)
    while True:
        best = _best_structure(s, n, k_max, threshold, cap, left1, left2, right1, right2)
        if best is not None and (best[0] <= k_max * cap * (1 + 1e-12) or k_max >= n):
            break
        if k_max >= n:
            break
        k_max = min(2 * k_max, n)
    if best is None:  # pragma: no cover - all-cap allocation is feasible here
        power[idx] = cap
        return power, bool(cap * float(np.sum((s - s.mean()) ** 2)) >= big)
    _, a, b, frac = best
    local = np.zeros(n)
    local[:a] = cap
    if b:
        local[n - b:] = cap
    for pos, val in frac:
        local[pos] = min(max(val, 0.0), cap)
    power[idx] = local
    return power, True


def _best_structure(s, n, k_max, J, cap, left1, left2, right1, right2):
    a, b = np.meshgrid(np.arange(k_max + 1), np.arange(k_max + 1), indexing="ij")
    keep = (a + b <= min(k_max, n))
    a, b = a[keep], b[keep]
    a0 = cap * (a + b)
    a1 = cap * (left1[a] + right1[b])
    a2 = cap * (left2[a] + right2[b])
    spread = a2 * a0 - a1**2  # = a0 * W_F
    tol = 1e-12
    cands = []  # (total, order_key, a, b, frac-list)

    inner = a + b < n
    for side in ("left", "right"):
        pos = np.where(side == "left", a, n - 1 - b)
        ok = inner.copy()
        m_f = s[np.clip(pos, 0, n - 1)]
        about = a2 - 2 * m_f * a1 + m_f**2 * a0 - J
        num = J * a0 - spread
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(num <= 0, 0.0, num / about)
        ok &= (a0 > 0) & ((num <= 0) | (about > 0))
        ok &= (t >= -tol * cap) & (t <= cap * (1 + tol))
        for i in np.flatnonzero(ok):
            frac = [(int(pos[i]), float(t[i]))] if t[i] > 0 else []
            cands.append((float(a0[i] + max(t[i], 0.0)), int(a[i]), int(b[i]), frac))

    pair = a + b + 2 <= n
    if pair.any():
        lo = s[np.clip(a, 0, n - 1)]
        hi = s[np.clip(n - 1 - b, 0, n - 1)]
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        dev = a1 - mid * a0
        var = a2 - 2 * mid * a1 + mid**2 * a0
        with np.errstate(divide="ignore", invalid="ignore"):
            total_frac = (J - var) / half**2
            x = 0.5 * (total_frac + dev / half)
            z = 0.5 * (total_frac - dev / half)
        ok = pair & (half > 0) & (total_frac > 0)
        ok &= (x >= -tol * cap) & (x <= cap * (1 + tol)) & (z >= -tol * cap) & (z <= cap * (1 + tol))
        for i in np.flatnonzero(ok):
            frac = [(int(a[i]), float(x[i])), (int(n - 1 - b[i]), float(z[i]))]
            cands.append((float(a0[i] + total_frac[i]), int(a[i]), int(b[i]), frac))

    if not cands:
        return None
    return min(cands, key=lambda c: (c[0], c[1] + c[2], c[1]))


def assignment_gradient(m, power, gain, y: float, dual_mu: float, noise_power: float):
    """dL/du_m: sensing Fisher gain minus the communication rate lost."""
    power = np.asarray(power, dtype=np.float64)
    rate = np.log2(1.0 + np.asarray(gain) * power / noise_power)
    out = -rate + dual_mu * power * (np.asarray(m, dtype=np.float64) - y) ** 2
    return out if out.ndim else float(out)


def assignment_update(power, gains, y: float, dual_mu: float, noise_power: float,
                      tie_epsilon: float = 0.0) -> np.ndarray:
    """Binary rule u_m = 1 iff dL/du_m >= -tie_epsilon."""
    m = subcarrier_indices(np.asarray(power).size)
    grad = assignment_gradient(m, power, gains, y, dual_mu, noise_power)
    return (grad >= -tie_epsilon).astype(np.int8)


def dual_update(dual_lambda: float, dual_mu: float, power, assignment, y: float,
                threshold: float, budget: float, eta_lambda: float, eta_mu: float) -> tuple[float, float]:
    """Projected subgradient step on the budget and bandwidth multipliers."""
    power = np.asarray(power, dtype=np.float64)
    lam = max(0.0, dual_lambda + eta_lambda * (power.sum() - budget))
    mu = max(0.0, dual_mu + eta_mu * (threshold - effective_bandwidth_about(power, assignment, y)))
    return lam, mu


def lagrangian(rate: float, power, assignment, y: float, dual_lambda: float, dual_mu: float,
               threshold: float, budget: float) -> float:
    power = np.asarray(power, dtype=np.float64)
    return (rate - dual_lambda * (power.sum() - budget)
            + dual_mu * (effective_bandwidth_about(power, assignment, y) - threshold))


def initial_assignment(num_subcarriers: int, fraction: float) -> np.ndarray:
    """Sensing on the ceil(fraction*M) subcarriers closest to the two band edges."""
    u = np.zeros(num_subcarriers, dtype=np.int8)
    n = min(num_subcarriers, math.ceil(fraction * num_subcarriers))
    n_low = (n + 1) // 2
    u[:n_low] = 1
    if n - n_low:
        u[num_subcarriers - (n - n_low):] = 1
    return u


def allocate_power(channel: ChannelResponse, assignment, config: SystemConfig,
                   threshold: float) -> tuple[Waveform, bool]:
    """Best power allocation for a frozen assignment.

    Sensing subcarriers receive the minimum-power allocation meeting
    ``threshold``; the remaining budget is water-filled over communication
    subcarriers with the price found by root finding.
    """
    u = np.asarray(assignment, dtype=np.int8)
    p_sense, ok = min_power_sensing_allocation(u, threshold, config.per_subcarrier_cap)
    left = config.total_budget - p_sense.sum()
    comm_gains = np.where(u == 0, channel.gains, 0.0)
    power = p_sense.copy()
    if left > 0:
        lam = lambda_for_budget(comm_gains, left, config.noise_power, config.per_subcarrier_cap)
        if math.isfinite(lam):
            power += np.where(u == 0, water_filling(comm_gains, lam, config.noise_power,
                                                    config.per_subcarrier_cap), 0.0)
    else:
        ok = False
    return Waveform(u, power), ok


# ---------------------------------------------------------------------------
# main loop


def optimize(channel: ChannelResponse, paths: PathSet, config: SystemConfig,
             opt_config: OptimizerConfig | None = None,
             requirement: SensingRequirement | None = None) -> OptimizationResult:
    """Run the BCD loop and return the best feasible iterate (by rate).

    When no iterate is feasible the least-violating one is returned with
    ``feasible=False``.
    """
    oc = opt_config or OptimizerConfig()
    req = requirement or sensing_requirement(config, paths)
    thr = req.threshold
    M = config.num_subcarriers
    gains = channel.gains
    noise, cap, budget = config.noise_power, config.per_subcarrier_cap, config.total_budget

    if budget <= 0:
        wf = Waveform(np.zeros(M, np.int8), np.zeros(M))
        return OptimizationResult(wf, 0.0, 0.0, thr <= 0, 0, thr)

    u = initial_assignment(M, oc.init_sensing_fraction)
    lam = lambda_for_budget(gains, budget, noise, cap)
    mu = 0.0
    eta_lam0 = oc.step_lambda * lam / budget
    # rate per watt per squared index at the band edge, relative to the threshold
    p_init = water_filling(gains, lam, noise, cap)
    rate_init = communication_rate(gains, p_init, np.zeros(M), noise)
    mu_scale = rate_init / (max(p_init.sum(), 1e-300) * ((M - 1) / 2.0) ** 2)
    eta_mu0 = oc.step_mu * mu_scale / thr if thr > 0 else 0.0
    y = (M + 1) / 2.0
    m_idx = subcarrier_indices(M)

    best = None   # (rate, waveform, W)
    least = None  # (violation, waveform, rate, W)
    seen: set[bytes] = set()
    trace: list[TraceRow] = []
    prev_lag = None
    calm = 0
    state = None
    for k in range(1, oc.max_iterations + 1):
        p_wf = water_filling(gains, lam, noise, cap)
        p_sense, _ = min_power_sensing_allocation(u, thr, cap)
        power = np.where(u == 0, p_wf, p_sense)
        if np.any(p_sense > 0):
            y = centroid(p_sense, u)

        rate = communication_rate(gains, power, u, noise)
        w_eff = squared_effective_bandwidth(power, u)
        total = float(power.sum())
        c1 = total <= budget * (1 + oc.eps_feas)
        c2 = thr <= 0 or w_eff >= thr * (1 - oc.eps_feas)
        trace.append(TraceRow(k, rate, w_eff, lam, mu, int(u.sum()), bool(c1 and c2)))

        if c1 and c2:
            if best is None or rate > best[0]:
                best = (rate, Waveform(u, power), w_eff)
        else:
            viol = max(0.0, total / budget - 1) + (max(0.0, 1 - w_eff / thr) if thr > 0 else 0.0)
            if least is None or viol < least[0]:
                least = (viol, Waveform(u, power), rate, w_eff)
        # primal recovery: the power block solved exactly for every new assignment
        key = u.tobytes()
        if key not in seen:
            seen.add(key)
            cand = _recover(channel, u, config, thr, oc.eps_feas)
            if cand is not None and (best is None or cand[0] > best[0]):
                best = cand

        lag = lagrangian(rate, power, u, y, lam, mu, thr, budget)
        if prev_lag is not None and abs(lag - prev_lag) <= oc.eps_lag * max(1.0, abs(lag)):
            calm += 1
        else:
            calm = 0
        prev_lag = lag

        # assignment rule at the current powers; unpowered subcarriers are probed at P_wf
        probe = np.where(power > 0, power, p_wf)
        state_lam = lam
        u_next = assignment_update(probe, gains, y, mu, noise, oc.tie_epsilon)
        step = oc.decay(k)
        lam, _ = dual_update(lam, mu, power, u, y, thr, budget, eta_lam0 * step, 0.0)
        # bandwidth price: residual at the Lagrangian maximiser (cap wherever mu (m-y)^2 > lambda)
        p_dual = np.where((u == 1) & (mu * (m_idx - y) ** 2 > state_lam), cap, 0.0)
        _, mu = dual_update(state_lam, mu, p_dual, u, y, thr, budget, 0.0, eta_mu0 * step)
        state = OptimizerState(Waveform(u, power), y, lam, mu, k, lag, c1, c2)
        # complementary slackness on both multipliers at a fixed assignment
        settled = (c1 and c2 and np.array_equal(u_next, u)
                   and (lam == 0 or abs(total - budget) <= oc.eps_feas * budget)
                   and (mu == 0 or thr <= 0 or abs(w_eff - thr) <= oc.eps_feas * thr))
        if settled or calm >= oc.patience:
            break
        u = u_next

    if best is not None:
        rate, wf, w_eff = best
        feasible = True
    else:
        _, wf, rate, w_eff = least
        feasible = False
    return OptimizationResult(wf, rate, w_eff, feasible, len(trace), thr, trace, state)


def is_feasible(waveform: Waveform, config: SystemConfig, threshold: float,
                eps_feas: float = 1e-3) -> bool:
    """Budget, cap and bandwidth constraints at the optimizer's tolerance."""
    p = waveform.power
    if np.any(p < 0) or np.any(p > config.per_subcarrier_cap * (1 + 1e-9)):
        return False
    if p.sum() > config.total_budget * (1 + eps_feas):
        return False
    return threshold <= 0 or squared_effective_bandwidth(p, waveform.assignment) >= threshold * (1 - eps_feas)


def _recover(channel, u, config, thr, eps_feas):
    """Exact power block for a fixed assignment; None when it cannot be feasible."""
    if thr > 0:
        s = np.flatnonzero(u == 1) + 1.0
        if s.size < 2 or config.per_subcarrier_cap * float(np.sum((s - s.mean()) ** 2)) < thr:
            return None
    wf, ok = allocate_power(channel, u, config, thr)
    if not ok:
        return None
    w_eff = squared_effective_bandwidth(wf.power, wf.assignment)
    if thr > 0 and w_eff < thr * (1 - eps_feas):
        return None
    return (communication_rate(channel.gains, wf.power, wf.assignment, config.noise_power), wf, w_eff)


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "cdr", "W", "lambda", "mu", "num_sensing", "feasible"])
        for row in trace:
            writer.writerow([row.iteration, f"{row.cdr:.12g}", f"{row.effective_bandwidth:.12g}",
                             f"{row.dual_lambda:.12g}", f"{row.dual_mu:.12g}", row.num_sensing,
                             int(row.feasible)])
