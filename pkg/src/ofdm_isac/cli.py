"""Command-line front end: optimize, sweep, estimate and compare.

Every command reads an optional JSON config with the sections
``scenario``, ``optimizer``, ``sweep`` and ``output`` (unknown keys are
rejected), writes ``manifest.json`` before doing any work and exits with
0 (feasible), 2 (infeasible) or 1 (usage or configuration error).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath

import numpy as np

from .crb import crb_from_bandwidth, sensing_requirement, squared_effective_bandwidth
from .errors import ConfigError, InfeasibleSensing, IsacError
from .harness import (AGGREGATE_COLUMNS, SweepSpec, compare_methods, fmt, run_manifest, run_sweep,
                      run_trials, scenario_dict, write_rows)
from .model import Path, PathSet, SystemConfig, Waveform, channel_response
from .optimizer import OptimizerConfig, optimize
from .scenario import Scenario, default_config, default_scenario

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2
SECTIONS = ("scenario", "optimizer", "sweep", "output")
SCENARIO_EXTRAS = ("seed", "num_paths", "range_error_bound_m", "paths")
PATH_KEYS = ("coefficient_re", "coefficient_im", "delay_s", "aoa_rad")


@dataclass
class RunConfig:
    system: SystemConfig
    optimizer: OptimizerConfig
    sweep: SweepSpec
    out_dir: FsPath
    seed: int = 0
    num_paths: int = 6
    paths: list | None = None
    threads: int = 1
    quiet: bool = False
    raw: dict = field(default_factory=dict)

    def scenario(self) -> Scenario:
        if self.paths is None:
            sc = default_scenario(self.seed, self.num_paths, self.system)
            return sc
        ps = PathSet(Path(complex(p["coefficient_re"], p["coefficient_im"]), p["delay_s"], p["aoa_rad"])
                     for p in self.paths)
        ps.validate(self.system)
        return Scenario(self.system, ps, self.seed, label="config-paths")

    def inputs(self) -> dict:
        sc = self.scenario()
        return {"scenario": scenario_dict(sc), "optimizer": asdict(self.optimizer),
                "sweep": asdict(self.sweep), "seed": self.seed}


def _reject_unknown(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {unknown}")


def load_run_config(path, args) -> RunConfig:
    raw = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown("top level", raw, SECTIONS)
    sections = {s: raw.get(s, {}) or {} for s in SECTIONS}
    for s, v in sections.items():
        if not isinstance(v, dict):
            raise ConfigError(f"section '{s}' must be an object")

    scen = dict(sections["scenario"])
    sys_fields = {f.name for f in fields(SystemConfig)}
    _reject_unknown("scenario", scen, sys_fields | set(SCENARIO_EXTRAS))
    extras = {k: scen.pop(k) for k in SCENARIO_EXTRAS if k in scen}
    try:
        system = default_config(**scen)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if "range_error_bound_m" in extras:
        if "delay_error_bound" in scen:
            raise ConfigError("give either delay_error_bound or range_error_bound_m, not both")
        system = system.with_range_error_bound(float(extras["range_error_bound_m"]))
    paths = extras.get("paths")
    if paths is not None:
        if not isinstance(paths, list) or not paths:
            raise ConfigError("scenario.paths must be a non-empty list")
        for p in paths:
            _reject_unknown("scenario.paths[]", p, PATH_KEYS)
            missing = set(PATH_KEYS) - set(p)
            if missing:
                raise ConfigError(f"scenario.paths[] missing {sorted(missing)}")

    opt = sections["optimizer"]
    _reject_unknown("optimizer", opt, {f.name for f in fields(OptimizerConfig)})
    optimizer = OptimizerConfig(**opt)

    sw = dict(sections["sweep"])
    _reject_unknown("sweep", sw, {f.name for f in fields(SweepSpec)})
    if args.trials is not None:
        sw["trials"] = args.trials
    sweep = SweepSpec(**sw)

    out = sections["output"]
    _reject_unknown("output", out, {"dir"})
    out_dir = FsPath(args.out or out.get("dir") or "out")

    seed = args.seed if args.seed is not None else int(extras.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    threads = args.threads
    if threads is None:
        env = os.environ.get("ISAC_THREADS")
        try:
            threads = int(env) if env else 1
        except ValueError as exc:
            raise ConfigError(f"ISAC_THREADS must be an integer, got {env!r}") from exc
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    num_paths = int(extras.get("num_paths", 6))
    return RunConfig(system, optimizer, sweep, out_dir, seed, num_paths, paths, threads,
                     bool(args.quiet), raw)


# ---------------------------------------------------------------------------
# file helpers


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def write_waveform_csv(path, waveform: Waveform, gains) -> None:
    rows = [{"m": i + 1, "u_m": int(waveform.assignment[i]), "P_m_watts": float(waveform.power[i]),
             "gain": float(gains[i])} for i in range(waveform.num_subcarriers)]
    write_rows(path, ("m", "u_m", "P_m_watts", "gain"), rows)


def read_waveform_csv(path, num_subcarriers: int) -> Waveform:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["m"]))
        u = np.array([int(r["u_m"]) for r in rows], dtype=np.int8)
        p = np.array([float(r["P_m_watts"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read waveform {path}: {exc}") from exc
    if u.size != num_subcarriers:
        raise ConfigError(f"waveform has {u.size} subcarriers, config expects {num_subcarriers}")
    return Waveform(u, p)


def _say(rc: RunConfig, msg: str) -> None:
    if not rc.quiet:
        print(msg)


def _start(rc: RunConfig, command: str, extra=None) -> None:
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    inputs = rc.inputs()
    if extra:
        inputs.update(extra)
    write_json(rc.out_dir / "manifest.json", run_manifest(command, inputs))


# ---------------------------------------------------------------------------
# commands


def cmd_optimize(rc: RunConfig) -> int:
    _start(rc, "optimize")
    sc = rc.scenario()
    cfg = sc.config
    ch = channel_response(cfg, sc.paths)
    req = sensing_requirement(cfg, sc.paths)
    res = optimize(ch, sc.paths, cfg, rc.optimizer, req)
    wf = res.waveform
    write_waveform_csv(rc.out_dir / "waveform.csv", wf, ch.gains)
    res.write_trace_csv(rc.out_dir / "trace.csv")
    w_eff = squared_effective_bandwidth(wf.power, wf.assignment)
    crbs = [crb_from_bandwidth(cfg, abs(b), w_eff) for b in sc.paths.coefficients]
    ranges = [cfg.speed_of_light * math.sqrt(c) for c in crbs]
    summary = {
        "feasible": bool(res.feasible),
        "cdr_bps_hz": res.achieved_cdr,
        "effective_bandwidth_w_index2": w_eff,
        "threshold_w_index2": req.threshold,
        "crb_delay_s2": [_finite(c) for c in crbs],
        "range_bound_m": [_finite(r) for r in ranges],
        "range_bound_worst_m": _finite(max(ranges)),
        "range_error_target_m": cfg.delay_error_bound * cfg.speed_of_light,
        "iterations": res.iterations_used,
        "num_sensing": wf.num_sensing,
        "total_power_w": float(wf.power.sum()),
    }
    write_json(rc.out_dir / "summary.json", summary)
    _say(rc, f"feasible={res.feasible} cdr={res.achieved_cdr:.6g} bit/s/Hz "
             f"sensing={wf.num_sensing} worst range bound={max(ranges):.4g} m "
             f"iterations={res.iterations_used}")
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def _write_sweep_outputs(rc: RunConfig, result) -> None:
    rows = [asdict(r) for r in result.rows]
    write_rows(rc.out_dir / "aggregate.csv", AGGREGATE_COLUMNS, rows)
    fig3 = sorted(rows, key=lambda r: (r["method"], r["total_budget_w"], r["range_error_bound_m"]))
    write_rows(rc.out_dir / "fig3_data.csv",
               ("method", "total_budget_w", "range_error_bound_m", "mean_cdr_bps_hz", "crb_range_m",
                "feasibility_rate"), fig3)
    fig4 = sorted(rows, key=lambda r: (r["method"], r["range_error_bound_m"], r["total_budget_w"]))
    write_rows(rc.out_dir / "fig4_data.csv",
               ("method", "range_error_bound_m", "total_budget_w", "mean_cdr_bps_hz", "crb_range_m",
                "rmse_range_m", "rmse_range_worst_m", "feasibility_rate", "n_sensing_mean"), fig4)


def _sweep_status(result) -> int:
    rows = result.rows
    jp = [r for r in rows if r.method == "JPCDE"]
    if jp:
        return EXIT_OK if all(r.feasibility_rate == 1.0 for r in jp) else EXIT_INFEASIBLE
    return EXIT_OK if any(r.feasibility_rate > 0 for r in rows) else EXIT_INFEASIBLE


def cmd_sweep(rc: RunConfig) -> int:
    _start(rc, "sweep")
    result = run_sweep(rc.sweep, rc.scenario(), rc.optimizer, rc.seed, rc.threads)
    _write_sweep_outputs(rc, result)
    for r in result.rows:
        _say(rc, f"{r.method:7s} P_req={fmt(r.total_budget_w)} W bound={fmt(r.range_error_bound_m)} m "
                 f"cdr={fmt(r.mean_cdr_bps_hz)} crb_range={fmt(r.crb_range_m)} "
                 f"rmse={fmt(r.rmse_range_m)} feasible={fmt(r.feasibility_rate)}")
    return _sweep_status(result)


def cmd_estimate(rc: RunConfig, waveform_path) -> int:
    _start(rc, "estimate", {"waveform_file": str(waveform_path) if waveform_path else None})
    sc = rc.scenario()
    cfg = sc.config
    ch = channel_response(cfg, sc.paths)
    if waveform_path:
        wf = read_waveform_csv(waveform_path, cfg.num_subcarriers)
    else:
        wf = optimize(ch, sc.paths, cfg, rc.optimizer).waveform
    if np.count_nonzero((wf.assignment == 1) & (wf.power > 0)) < 2:
        print("error: waveform has fewer than 2 powered sensing subcarriers", file=sys.stderr)
        return EXIT_INFEASIBLE
    records, failed = run_trials(ch, sc.paths, wf, cfg, rc.sweep.trials, rc.seed, 0)
    write_rows(rc.out_dir / "trials.csv",
               ("trial", "path", "tau_true_s", "tau_hat_s", "range_err_m", "b_err_abs"),
               [asdict(r) for r in records])
    if records:
        errs = np.array([r.range_err_m for r in records])
        _say(rc, f"trials={rc.sweep.trials} failed={failed} range rmse={math.sqrt(np.mean(errs**2)):.6g} m")
    return EXIT_OK


def cmd_compare(rc: RunConfig, aggregate_path) -> int:
    _start(rc, "compare", {"aggregate_file": str(aggregate_path) if aggregate_path else None})
    if aggregate_path:
        result = _read_aggregate(aggregate_path, rc.sweep)
    else:
        result = run_sweep(rc.sweep, rc.scenario(), rc.optimizer, rc.seed, rc.threads)
        _write_sweep_outputs(rc, result)
    report = compare_methods(result)
    payload = [{"total_budget_w": p.total_budget, "range_error_bound_m": p.range_error_bound,
                "ranking": [{"method": m, "mean_cdr_bps_hz": c} for m, c in p.ranking],
                "violations": p.violations} for p in report]
    write_json(rc.out_dir / "comparison.json", payload)
    bad = 0
    for p in report:
        order = " > ".join(m for m, _ in p.ranking)
        flag = "" if not p.violations else "  VIOLATION: " + ", ".join(p.violations)
        bad += bool(p.violations)
        _say(rc, f"P_req={fmt(p.total_budget)} W bound={fmt(p.range_error_bound)} m: {order}{flag}")
    return EXIT_OK if not bad else EXIT_INFEASIBLE


def _read_aggregate(path, spec):
    from .harness import AggregateResult, AggregateRow

    ints = {"trials", "failed_trials"}
    strs = {"method", "sweep_param", "error"}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = []
            for r in csv.DictReader(fh):
                kw = {}
                for f in fields(AggregateRow):
                    v = r.get(f.name, "")
                    if f.name in strs:
                        kw[f.name] = v
                    elif f.name in ints:
                        kw[f.name] = int(v or 0)
                    else:
                        kw[f.name] = float(v) if v != "" else float("nan")
                rows.append(AggregateRow(**kw))
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read aggregate {path}: {exc}") from exc
    return AggregateResult(spec, rows)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--trials", type=int, help="estimation trials per point")
    common.add_argument("--threads", type=int, help="worker threads (env ISAC_THREADS)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="ofdm-isac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize", parents=[common], help="design one waveform")
    sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep over P_req or the range bound")
    est = sub.add_parser("estimate", parents=[common], help="Monte Carlo estimation for one waveform")
    est.add_argument("--waveform", help="waveform.csv from 'optimize' (default: optimise first)")
    cmp_ = sub.add_parser("compare", parents=[common], help="rank methods per sweep point")
    cmp_.add_argument("--aggregate", help="existing aggregate.csv (default: run the sweep)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        rc = load_run_config(args.config, args)
        if args.command == "optimize":
            return cmd_optimize(rc)
        if args.command == "sweep":
            return cmd_sweep(rc)
        if args.command == "estimate":
            return cmd_estimate(rc, args.waveform)
        return cmd_compare(rc, args.aggregate)
    except InfeasibleSensing as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (IsacError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
