"""Monte Carlo sweeps over the power budget and the range-error bound.

Every (sweep point, method) pair is optimised once per scenario; the
estimation trials then reuse that waveform with fresh noise. Trial seeds are
derived from (master seed, point index, trial index) and results are reduced
in index order, so the thread count never changes any output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .baselines import rsapa, rsaupa, saupa
from .crb import path_range_bounds, sensing_requirement
from .errors import ConfigError, FewerPeaksThanPaths, InfeasibleSensing
from .model import ChannelResponse, PathSet, SystemConfig, Waveform, channel_response
from .optimizer import OptimizerConfig, is_feasible, optimize
from .receiver import default_pilots, estimate_paths, simulate_rx
from .scenario import Scenario

METHODS = ("JPCDE", "SAUPA", "RSAPA", "RSAUPA")
PARAMETERS = ("total_budget", "range_error_bound")
# seed-sequence word reserved for the random baseline assignments
_ASSIGNMENT_STREAM = 0x5A
_TRIAL_STREAM = 0x7E

AGGREGATE_COLUMNS = ("method", "sweep_param", "sweep_value", "mean_cdr_bps_hz", "crb_range_m",
                     "rmse_range_m", "feasibility_rate", "n_sensing_mean", "total_budget_w",
                     "range_error_bound_m", "crb_range_mean_m", "rmse_range_worst_m", "trials",
                     "failed_trials", "error")


@dataclass(frozen=True)
class SweepSpec:
    """Grid of (parameter value x other value) points.

    ``parameter`` is the swept quantity ("total_budget" in W or
    "range_error_bound" in m); ``others`` lists the values of the remaining
    one. ``trials = 0`` skips estimation.
    """

    parameter: str = "total_budget"
    values: tuple = (6.0, 8.0, 10.0, 12.0, 14.0)
    trials: int = 300
    methods: tuple = METHODS
    others: tuple = (0.05,)
    sensing_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "others", tuple(float(v) for v in self.others))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.parameter not in PARAMETERS:
            raise ConfigError(f"parameter must be one of {PARAMETERS}")
        for name in ("values", "others"):
            v = getattr(self, name)
            if not v or any(b <= a for a, b in zip(v, v[1:])):
                raise ConfigError(f"{name} must be a non-empty strictly increasing list")
            if any(not x > 0 for x in v):
                raise ConfigError(f"{name} must be positive")
        if self.trials < 0:
            raise ConfigError("trials must be >= 0")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ConfigError(f"unknown method(s) {sorted(unknown)}; choose from {METHODS}")
        if not 0 < self.sensing_fraction < 1:
            raise ConfigError("sensing_fraction must lie in (0, 1)")

    @property
    def other_parameter(self) -> str:
        return PARAMETERS[1 - PARAMETERS.index(self.parameter)]

    def points(self) -> list[tuple[int, float, float]]:
        """(point index, total budget W, range-error bound m), others outermost."""
        out = []
        for other in self.others:
            for value in self.values:
                budget, bound = (value, other) if self.parameter == "total_budget" else (other, value)
                out.append((len(out), budget, bound))
        return out


@dataclass
class TrialRecord:
    trial: int
    path: int
    tau_true_s: float
    tau_hat_s: float
    range_err_m: float
    b_err_abs: float


@dataclass
class PointResult:
    method: str
    point: int
    total_budget: float
    range_error_bound: float
    cdr: list = field(default_factory=list)          # per scenario
    feasible: list = field(default_factory=list)
    num_sensing: list = field(default_factory=list)
    crb_range: list = field(default_factory=list)    # per scenario, per path
    sq_range_errors: list = field(default_factory=list)  # per trial, per path
    failed_trials: int = 0
    trials: int = 0
    errors: list = field(default_factory=list)


@dataclass
class AggregateRow:
    method: str
    sweep_param: str
    sweep_value: float
    mean_cdr_bps_hz: float
    crb_range_m: float
    rmse_range_m: float
    feasibility_rate: float
    n_sensing_mean: float
    total_budget_w: float
    range_error_bound_m: float
    crb_range_mean_m: float
    rmse_range_worst_m: float
    trials: int
    failed_trials: int
    error: str = ""


@dataclass
class AggregateResult:
    spec: SweepSpec
    rows: list[AggregateRow]

    def by_method(self, method: str) -> list[AggregateRow]:
        return [r for r in self.rows if r.method == method]

    def row(self, method: str, total_budget: float, range_error_bound: float) -> AggregateRow:
        for r in self.rows:
            if (r.method == method and math.isclose(r.total_budget_w, total_budget)
                    and math.isclose(r.range_error_bound_m, range_error_bound)):
                return r
        raise KeyError((method, total_budget, range_error_bound))

    def write_csv(self, path) -> None:
        write_rows(path, AGGREGATE_COLUMNS, [asdict(r) for r in self.rows])


def fmt(value) -> str:
    """Locale-independent 12-significant-digit formatting; NaN/None become empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else f"{float(value):.12g}"
    return str(value)


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[c]) for c in columns])


# ---------------------------------------------------------------------------
# per-method waveform design


def design_waveform(method: str, channel: ChannelResponse, paths: PathSet, config: SystemConfig,
                    assignment_seed, opt_config: OptimizerConfig | None = None,
                    sensing_fraction: float = 0.5) -> Waveform:
    if method == "JPCDE":
        return optimize(channel, paths, config, opt_config).waveform
    if method == "SAUPA":
        return saupa(channel, paths, config)
    if method == "RSAPA":
        return rsapa(channel, paths, config, assignment_seed, sensing_fraction)
    if method == "RSAUPA":
        return rsaupa(channel, paths, config, assignment_seed, sensing_fraction)
    raise ConfigError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# estimation trials


def wrap_delay(err: float, period: float) -> float:
    return (err + 0.5 * period) % period - 0.5 * period


def match_estimates(paths: PathSet, estimates) -> list[int]:
    """Index of the estimate assigned to each true path (nearest direction cosines)."""
    true_c = np.cos(paths.aoas)
    est_c = np.cos([e.aoa_hat for e in estimates])
    d = np.abs(true_c[:, None] - est_c[None, :])
    rows, cols = linear_sum_assignment(np.minimum(d, 2.0 - d))
    out = [0] * len(paths)
    for r, c in zip(rows, cols):
        out[r] = int(c)
    return out


def trial_seed(master_seed: int, point: int, trial: int, scenario: int = 0) -> list[int]:
    """Seed-sequence entropy of one noise realisation (shared by all methods)."""
    return [int(master_seed), int(point), _TRIAL_STREAM, int(scenario), int(trial)]


def run_trials(channel: ChannelResponse, paths: PathSet, waveform: Waveform, config: SystemConfig,
               trials: int, master_seed: int = 0, point: int = 0,
               extraction: str = "mf", scenario_index: int = 0) -> tuple[list[TrialRecord], int]:
    """Monte Carlo estimation; returns per-path records and the number of failed trials."""
    records: list[TrialRecord] = []
    failed = 0
    pilots = default_pilots(config.num_subcarriers)
    period = config.max_delay
    for t in range(trials):
        snap = simulate_rx(channel, waveform, pilots, None, trial_seed(master_seed, point, t, scenario_index), config)
        try:
            est = estimate_paths(snap, config, len(paths), method=extraction)
        except FewerPeaksThanPaths:
            failed += 1
            continue
        for p, j in enumerate(match_estimates(paths, est)):
            true = paths[p]
            err = wrap_delay(est[j].tau_hat - true.delay, period)
            records.append(TrialRecord(t, p, true.delay, est[j].tau_hat, err * config.speed_of_light,
                                       abs(est[j].b_hat - true.coefficient)))
    return records, failed


# ---------------------------------------------------------------------------
# sweeps


def _run_unit(unit):
    method, point, budget, bound, scenarios, spec, opt_config, master_seed = unit
    res = PointResult(method, point, budget, bound)
    for s_idx, sc in enumerate(scenarios):
        cfg = sc.config.updated(total_budget=budget).with_range_error_bound(bound)
        ch = channel_response(cfg, sc.paths)
        thr = sensing_requirement(cfg, sc.paths).threshold
        seed = [int(master_seed), int(point), _ASSIGNMENT_STREAM, s_idx]
        try:
            wf = design_waveform(method, ch, sc.paths, cfg, seed, opt_config, spec.sensing_fraction)
        except InfeasibleSensing as exc:
            res.feasible.append(False)
            res.errors.append(f"scenario {s_idx}: {exc}")
            continue
        eps = (opt_config or OptimizerConfig()).eps_feas
        ok = is_feasible(wf, cfg, thr, eps)
        res.feasible.append(ok)
        res.num_sensing.append(wf.num_sensing)
        if not ok:
            res.errors.append(f"scenario {s_idx}: infeasible")
            continue
        res.cdr.append(float(np.sum(np.log2(1 + ch.gains * wf.power / cfg.noise_power)[wf.assignment == 0])))
        res.crb_range.append(path_range_bounds(cfg, sc.paths, wf.power, wf.assignment))
        if spec.trials:
            try:
                recs, failed = run_trials(ch, sc.paths, wf, cfg, spec.trials, master_seed, point,
                                          scenario_index=s_idx)
            except InfeasibleSensing as exc:
                res.errors.append(f"scenario {s_idx}: {exc}")
                continue
            res.trials += spec.trials
            res.failed_trials += failed
            per_trial: dict[int, list[float]] = {}
            for r in recs:
                per_trial.setdefault(r.trial, []).append(r.range_err_m ** 2)
            res.sq_range_errors.extend(per_trial[t] for t in sorted(per_trial))
    return res


def _aggregate(res: PointResult, spec: SweepSpec) -> AggregateRow:
    nan = float("nan")
    value = res.total_budget if spec.parameter == "total_budget" else res.range_error_bound
    crb_worst = max((float(np.max(c)) for c in res.crb_range), default=nan)
    crb_mean = (float(np.sqrt(np.mean([np.mean(np.square(c)) for c in res.crb_range])))
                if res.crb_range else nan)
    if res.sq_range_errors:
        sq = np.array(res.sq_range_errors)  # trials x paths
        rmse = float(np.sqrt(sq.mean()))
        rmse_worst = float(np.sqrt(sq.mean(axis=0)).max())
    else:
        rmse = rmse_worst = nan
    return AggregateRow(
        method=res.method, sweep_param=spec.parameter, sweep_value=value,
        mean_cdr_bps_hz=float(np.mean(res.cdr)) if res.cdr else nan,
        crb_range_m=crb_worst, rmse_range_m=rmse,
        feasibility_rate=float(np.mean(res.feasible)) if res.feasible else 0.0,
        n_sensing_mean=float(np.mean(res.num_sensing)) if res.num_sensing else nan,
        total_budget_w=res.total_budget, range_error_bound_m=res.range_error_bound,
        crb_range_mean_m=crb_mean, rmse_range_worst_m=rmse_worst,
        trials=res.trials, failed_trials=res.failed_trials, error="; ".join(res.errors))


def run_sweep(spec: SweepSpec, scenario: Scenario | Sequence[Scenario],
              opt_config: OptimizerConfig | None = None, master_seed: int = 0,
              threads: int = 1) -> AggregateResult:
    """Design every method's waveform at every point, then run the estimation trials."""
    scenarios = [scenario] if isinstance(scenario, Scenario) else list(scenario)
    if not scenarios:
        raise ConfigError("at least one scenario is required")
    units = [(m, pt, budget, bound, scenarios, spec, opt_config, master_seed)
             for pt, budget, bound in spec.points() for m in spec.methods]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_unit, units))
    else:
        results = [_run_unit(u) for u in units]
    return AggregateResult(spec, [_aggregate(r, spec) for r in results])


# ---------------------------------------------------------------------------
# method comparison

EXPECTED_ORDER = (("JPCDE", "SAUPA"), ("JPCDE", "RSAPA"), ("SAUPA", "RSAUPA"), ("RSAPA", "RSAUPA"))


@dataclass
class PointRanking:
    total_budget: float
    range_error_bound: float
    ranking: list[tuple[str, float]]
    violations: list[str]


def compare_methods(result: AggregateResult) -> list[PointRanking]:
    """Rank feasible methods by mean CDR at each point and flag order violations.

    The expected partial order is JPCDE >= {SAUPA, RSAPA} >= RSAUPA; a pair
    is only checked when both methods are feasible.
    """
    points: dict[tuple[float, float], dict[str, float]] = {}
    for r in result.rows:
        key = (r.total_budget_w, r.range_error_bound_m)
        points.setdefault(key, {})
        if r.feasibility_rate > 0 and not math.isnan(r.mean_cdr_bps_hz):
            points[key][r.method] = r.mean_cdr_bps_hz
    out = []
    for (budget, bound), cdrs in points.items():
        ranking = sorted(cdrs.items(), key=lambda kv: (-kv[1], METHODS.index(kv[0])))
        violations = [f"{hi} < {lo}" for hi, lo in EXPECTED_ORDER
                      if hi in cdrs and lo in cdrs and cdrs[hi] < cdrs[lo]]
        out.append(PointRanking(budget, bound, ranking, violations))
    return out


# ---------------------------------------------------------------------------
# provenance


def scenario_dict(sc: Scenario) -> dict:
    return {
        "label": sc.label,
        "rng_seed": sc.rng_seed,
        "config": asdict(sc.config),
        "paths": [{"coefficient_re": p.coefficient.real, "coefficient_im": p.coefficient.imag,
                   "delay_s": p.delay, "aoa_rad": p.aoa} for p in sc.paths],
    }


def content_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def run_manifest(command: str, inputs: dict) -> dict:
    """Manifest recording the inputs of a run and a hash over them."""
    from . import __version__

    return {"command": command, "package_version": __version__, "inputs": inputs,
            "input_hash": content_hash(inputs)}
