"""Scenario runs: verify, simulate, estimate and dump-path, each writing a JSON summary."""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError, RelBoltzError
from ..geodesic import write_path_csv
from ..phase_space import PhasePoint, lift_to_shell, shell_error
from ..process import estimate_f, simulate_forward, write_events_csv
from ..rng import CounterRNG
from .checks import CHECKS, run_check
from .config import Scenario, _num, _vec, build_field, build_scenario, load_config
from .io import SUMMARY_SCHEMA_VERSION, write_json, write_states_csv

__all__ = ["RunResult", "run_scenario", "run_simulate", "run_estimate", "run_dump_path", "prepare"]

# stream 0 is used by simulate/estimate/dump-path; check i uses stream 1 + i
_CHECK_STREAM0 = 1


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    files: list


def prepare(config, seed=None, workers=None) -> Scenario:
    raw = load_config(config) if not isinstance(config, dict) else config
    sc = build_scenario(raw, seed=seed, workers=workers)
    for i, c in enumerate(sc.checks):
        if c["name"] not in CHECKS:
            raise ConfigError(f"checks[{i}].name: unknown check {c['name']!r} "
                              f"(known: {', '.join(sorted(CHECKS))})")
    return sc


def _header(sc: Scenario, command: str) -> dict:
    return {"schema_version": SUMMARY_SCHEMA_VERSION, "command": command, "scenario": sc.name,
            "seed": sc.seed, "config": sc.echo(), "sim": {k: v for k, v in sc.sim.to_dict().items()
                                                           if k != "workers"}}


def _out(out_dir, sc, stem):
    d = Path(out_dir if out_dir is not None else ".")
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{sc.name}.{stem}"


def run_scenario(config, seed: Optional[int] = None, workers: Optional[int] = None,
                 out_dir=None) -> RunResult:
    """Run every check of a scenario and write ``<name>.verify.json``.

    The exit code is 0 iff every check passed (an empty check list passes).
    Module errors inside a check fail that check and are reported with the
    scenario and check name; configuration errors abort before anything runs.
    """
    sc = prepare(config, seed, workers)
    t_all = time.perf_counter()
    results, times = [], []
    for i, spec in enumerate(sc.checks):
        rng = CounterRNG(sc.seed, _CHECK_STREAM0 + i)
        t0 = time.perf_counter()
        try:
            res = run_check(sc, spec, rng)
        except ConfigError as exc:
            raise ConfigError(f"{sc.name}: checks[{i}] ({spec['name']}): {exc}") from exc
        except (RelBoltzError, ValueError, FloatingPointError) as exc:
            res = {"name": spec["name"], "passed": False, "metrics": {},
                   "error": f"{sc.name}: check {spec['name']!r}: {type(exc).__name__}: {exc}"}
        res["passed"] = bool(res["passed"])
        results.append(res)
        times.append({"name": spec["name"], "seconds": time.perf_counter() - t0})
    n_pass = sum(r["passed"] for r in results)
    summary = _header(sc, "verify")
    summary.update({"checks": results, "n_checks": len(results), "n_passed": n_pass,
                    "passed": n_pass == len(results),
                    "timings": {"total_seconds": time.perf_counter() - t_all, "checks": times}})
    path = write_json(_out(out_dir, sc, "verify.json"), summary)
    return RunResult(0 if summary["passed"] else 1, summary, [str(path)])


def _start(sc: Scenario, sec: dict, where: str, n: int, rng: CounterRNG) -> PhasePoint:
    m = _vec(sec, "m", where, n=4, default=[0.0, 0.0, 0.0, 0.0])
    try:
        sc.chart.check_domain(m)
    except RelBoltzError as exc:
        raise ConfigError(f"{where}.m: {exc}") from exc
    tet = sc.chart.frame(m)
    if sec.get("sample_from_field", False):
        p = sc.field.sample_partner(sc.chart, m, rng.spawn(rng.stream + 1000), np.arange(n))
        return PhasePoint(np.broadcast_to(m, (n, 4)).copy(), p)
    return lift_to_shell(sc.chart, m, tet, _vec(sec, "p", where, default=[0.0, 0.0, 0.0]))


def run_simulate(config, seed=None, workers=None, out_dir=None) -> RunResult:
    """Forward paths from the ``[simulate]`` section; final states CSV, optional event log."""
    sc = prepare(config, seed, workers)
    sec = sc.raw.get("simulate", {})
    n = int(_num(sec, "n", "simulate", default=1000, positive=True))
    s_max = _num(sec, "s_max", "simulate", default=sc.sim.s_max, positive=True)
    rng = CounterRNG(sc.seed, 0)
    phi0 = _start(sc, sec, "simulate", n, rng)
    record = bool(sec.get("record", False))
    t0 = time.perf_counter()
    batch = simulate_forward(sc.chart, phi0, sc.field, sc.kernel, sc.sim, rng,
                             n=n if phi0.m.ndim == 1 else None, record=record,
                             V=sc.hypersurface if sec.get("stop_at_hypersurface", False) else None,
                             s_max=s_max)
    files = [str(write_states_csv(_out(out_dir, sc, "states.csv"), batch, {"scenario": sc.name}))]
    if record:
        p = _out(out_dir, sc, "events.csv")
        write_events_csv(p, batch.events, {"scenario": sc.name})
        files.append(str(p))
    p0 = sc.chart.frame(batch.m).to_frame(sc.chart, batch.mdot)[..., 0]
    summary = _header(sc, "simulate")
    summary.update({
        "n_paths": n, "s_max": s_max, "lambda_bar": batch.lambda_bar,
        "mean_jumps": float(batch.n_jumps.mean()), "mean_candidates": float(batch.n_candidates.mean()),
        "n_aborted": int(batch.aborted.sum()), "n_hit": int(batch.hit.sum()),
        "max_shell_error": batch.max_shell_error,
        "final_energy_mean": float(p0.mean()),
        "files": [Path(f).name for f in files],
        "timings": {"total_seconds": time.perf_counter() - t0},
    })
    files.insert(0, str(write_json(_out(out_dir, sc, "simulate.json"), summary)))
    return RunResult(0, summary, files)


def run_estimate(config, seed=None, workers=None, out_dir=None) -> RunResult:
    """Causal estimate of f at the ``[estimate]`` phase point from data on the scenario hypersurface."""
    sc = prepare(config, seed, workers)
    if sc.hypersurface is None:
        raise ConfigError("estimate: the scenario has no [hypersurface]")
    sec = sc.raw.get("estimate", {})
    n = int(_num(sec, "n", "estimate", default=10000, positive=True))
    rng = CounterRNG(sc.seed, 0)
    phi0 = _start(sc, {k: v for k, v in sec.items() if k != "sample_from_field"}, "estimate", 1, rng)
    f_init = sc.field
    if "f_initial" in sec:
        f_init = build_field(sec["f_initial"], "estimate.f_initial", sc.raw.get("_base_dir", "."))
    t0 = time.perf_counter()
    est = estimate_f(sc.chart, phi0, sc.field, sc.kernel, sc.hypersurface, f_init, n, sc.sim, rng)
    exact = float(sc.field.eval(sc.chart, phi0.m, phi0.mdot))
    states = write_states_csv(_out(out_dir, sc, "estimate_states.csv"), est.batch, {"scenario": sc.name})
    summary = _header(sc, "estimate")
    summary.update({
        "n_paths": n, "m": phi0.m, "mdot": phi0.mdot, "estimate": est.estimate, "stderr": est.stderr,
        "field_value": exact, "lambda_bar": est.batch.lambda_bar,
        "mean_jumps": float(est.batch.n_jumps.mean()), "max_hit_time": float(est.batch.s.max()),
        "max_shell_error": est.batch.max_shell_error, "files": [states.name],
        "timings": {"total_seconds": time.perf_counter() - t0},
    })
    path = write_json(_out(out_dir, sc, "estimate.json"), summary)
    return RunResult(0, summary, [str(path), str(states)])


def run_dump_path(config, seed=None, workers=None, out_dir=None) -> RunResult:
    """One forward path from the ``[simulate]`` start as a path CSV.

    Rows are the state every ``[simulate] dump_every`` of proper time
    (default sim.ds) plus the state right after each jump.
    """
    sc = prepare(config, seed, workers)
    sec = {k: v for k, v in sc.raw.get("simulate", {}).items() if k != "sample_from_field"}
    s_max = _num(sec, "s_max", "simulate", default=sc.sim.s_max, positive=True)
    every = _num(sec, "dump_every", "simulate", default=sc.sim.ds, positive=True)
    rng = CounterRNG(sc.seed, 0)
    phi0 = _start(sc, sec, "simulate", 1, rng)
    grid = np.arange(0.0, s_max + 0.5 * every, every)
    grid = grid[grid <= s_max]
    batch = simulate_forward(sc.chart, phi0, sc.field, sc.kernel, sc.sim, rng, n=1, s_grid=grid,
                             record=True, s_max=s_max)
    snap = batch.snapshots
    rows = [(float(t), snap["m"][i, 0], snap["mdot"][i, 0]) for i, t in enumerate(grid)
            if np.all(np.isfinite(snap["m"][i, 0]))]
    rows += [(e.s, e.after.m, e.after.mdot) for e in batch.events[0] if e.kind == "jump"]
    rows.sort(key=lambda r: r[0])
    recs = [(t, PhasePoint(m, v), float(shell_error(sc.chart, m, v))) for t, m, v in rows]
    p = _out(out_dir, sc, "path.csv")
    write_path_csv(p, recs, {"scenario": sc.name, "seed": sc.seed})
    summary = _header(sc, "dump-path")
    summary.update({"n_records": len(recs), "n_jumps": int(batch.n_jumps[0]),
                    "max_shell_error": max(r[2] for r in recs), "files": [p.name]})
    path = write_json(_out(out_dir, sc, "dump-path.json"), summary)
    return RunResult(0, summary, [str(path), str(p)])
