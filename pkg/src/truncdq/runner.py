"""Replication harness behind the CLI: trajectories, truth, sweeps and output files."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

import truncdq
from truncdq import analysis
from truncdq import estimators as est
from truncdq import truth as gt
from truncdq.config import RunConfig, make_env, trial_env_seed
from truncdq.envs.rideshare import RideshareSim
from truncdq.mdp import ConfigurationError, EstimationError, NonstationaryMdp, Trajectory, simulate

TRAJECTORY_HEADER = ["t", "state", "action", "reward"]
REPLICATION_HEADER = ["trial", "grid_value", "estimator", "param_k", "estimate", "tau", "error"]


# ----------------------------------------------------------------------
# files


def _ensure_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {p}: {exc.strerror}") from None
    return p


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc.strerror}") from None


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for t, (x, z, y) in enumerate(zip(traj.states.tolist(), traj.actions.tolist(), traj.rewards.tolist()), start=1):
        w.writerow([t, x, z, repr(float(y))])
    return buf.getvalue()


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJECTORY_HEADER:
        raise ConfigurationError(f"{path}: expected header {','.join(TRAJECTORY_HEADER)}")
    body = [r for r in rows[1:] if r]
    try:
        t = np.array([int(r[0]) for r in body])
        x = np.array([int(float(r[1])) for r in body])
        z = np.array([int(r[2]) for r in body])
        y = np.array([float(r[3]) for r in body])
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"{path}: malformed row ({exc})") from None
    if not np.array_equal(t, np.arange(1, len(t) + 1)):
        raise ConfigurationError(f"{path}: t must run 1..T")
    return Trajectory(x, z, y, seed=-1, policy={"type": "file", "path": str(path)})


def manifest(cfg: RunConfig | None, command: str, started: float, extra: dict | None = None) -> str:
    d = {
        "command": command,
        "config_hash": cfg.digest() if cfg else None,
        "config": cfg.to_dict() if cfg else None,
        "versions": {
            "truncdq": truncdq.__version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    d.update(extra or {})
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------------
# per-trial pieces


def env_for_trial(cfg: RunConfig, section: dict, trial: int):
    seed = trial_env_seed(cfg.master_seed, trial) if cfg.regenerate_env_per_trial else None
    return make_env(section, seed)


def simulate_trial(env, cfg: RunConfig, trial: int) -> Trajectory:
    if isinstance(env, RideshareSim):
        return env.simulate(cfg.policy(), cfg.master_seed, trial)
    return simulate(env, cfg.policy(), cfg.master_seed, trial)


def trial_truth(env, cfg: RunConfig) -> tuple[float, float]:
    """(tau, standard error); the error is 0 for exact truth and nan without truth."""
    method = cfg.truth["method"]
    if method == "none":
        return math.nan, math.nan
    if method == "exact":
        if not isinstance(env, NonstationaryMdp):
            raise ConfigurationError("exact truth needs a finite-state environment; use truth.method = \"mc\"")
        return gt.exact_gate(env)[0], 0.0
    tau, se, _ = gt.mc_gate(env, cfg.truth["reps"], cfg.master_seed, cfg.truth["paired"])
    return tau, se


def truth_bundle(env, cfg: RunConfig) -> gt.TruthBundle:
    if cfg.truth["method"] == "mc":
        return gt.mc_truth(env, cfg.truth["reps"], cfg.master_seed, cfg.truth["paired"])
    if not isinstance(env, NonstationaryMdp):
        raise ConfigurationError("exact truth is unavailable for the ride-share simulator; use truth.method = \"mc\"")
    return gt.compute_truth(env, ks=cfg.truth.get("ks", []))


def _ks(entry) -> list:
    ks = entry.get("k", [])
    return ks if isinstance(ks, list) else [ks]


def run_estimators(traj: Trajectory, cfg: RunConfig, trial: int) -> tuple[list, list]:
    """All configured estimators on one trajectory; failures become error rows."""
    theta = cfg.design["theta"]
    T = len(traj)
    reports, errors = [], []

    def attempt(name, params, fn):
        try:
            value, diag = fn()
            reports.append(est.EstimateReport(name, params, float(value), cfg.master_seed, T, trial, diag))
        except (ConfigurationError, EstimationError, np.linalg.LinAlgError) as exc:
            errors.append((name, params, str(exc)))

    for entry in cfg.estimators:
        name = entry["name"]
        if name == "dm":
            attempt("dm", {}, lambda: (est.dm(traj, theta), {}))
        elif name == "untruncated_dq":
            attempt("untruncated_dq", {}, lambda: (est.untruncated_dq(traj, theta), {}))
        elif name == "truncated_dq":
            ks = _ks(entry)
            numeric = [k for k in ks if k != "T" and k <= T - 1]
            scan = est.k_scan(traj, numeric, theta) if numeric else {}
            for k in ks:
                if k == "T":
                    attempt(name, {"k": "T"}, lambda: (est.untruncated_dq(traj, theta), {}))
                elif k in scan:
                    attempt(name, {"k": k}, lambda k=k: (scan[k], {}))
                else:
                    attempt(name, {"k": k}, lambda k=k: (est.truncated_dq(traj, k, theta), {}))
        elif name == "truncated_dq_blocks":
            for k in _ks(entry):
                attempt(name, {"k": k}, lambda k=k: (est.truncated_dq_blocks(traj, k, theta), {}))
        elif name == "switchback_bc":
            block_len = entry.get("block_len", cfg.design.get("block_len", 1))
            params = {"burn_in": entry["burn_in"]}
            attempt(name, params, lambda: (est.switchback_bc(traj, block_len, entry["burn_in"]), {}))
        elif name in ("model_ope", "stationary_dq"):
            attempt(name, {}, lambda name=name: est.stationary_model_baseline(traj, name))
        else:  # pragma: no cover - schema rejects unknown names
            raise ConfigurationError(f"unknown estimator {name!r}")
    return reports, errors


@dataclass
class TrialResult:
    trial: int
    grid_value: object
    tau: float
    tau_se: float
    reports: list
    errors: list = field(default_factory=list)


def _run_trial(cfg: RunConfig, gi: int, value, section: dict, trial: int, cache: dict) -> TrialResult:
    if cfg.regenerate_env_per_trial:
        env = env_for_trial(cfg, section, trial)
        tau, se = trial_truth(env, cfg)
    else:
        env, (tau, se) = cache[gi]
    traj = simulate_trial(env, cfg, trial)
    reports, errors = run_estimators(traj, cfg, trial)
    return TrialResult(trial, value, tau, se, reports, errors)


# ----------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, out_dir, threads: int = 1) -> list[Path]:
    """One trajectory CSV per replication (first grid value only)."""
    out = _ensure_dir(out_dir)
    started = time.time()
    section = cfg.env_sections()[0][1]
    shared = None if cfg.regenerate_env_per_trial else make_env(section)

    def one(i):
        env = shared if shared is not None else env_for_trial(cfg, section, i)
        path = out / f"trajectory_{i:04d}.csv"
        _write(path, trajectory_csv(simulate_trial(env, cfg, i)))
        return path

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        paths = list(pool.map(one, range(cfg.replications)))
    _write(out / "manifest.json", manifest(cfg, "simulate", started, {"files": [p.name for p in paths]}))
    return paths


def cmd_truth(cfg: RunConfig, out_dir) -> gt.TruthBundle:
    out = _ensure_dir(out_dir)
    started = time.time()
    bundle = truth_bundle(make_env(cfg.env_sections()[0][1]), cfg)
    _write(out / "truth.json", bundle.to_json() + "\n")
    _write(out / "manifest.json", manifest(cfg, "truth", started))
    return bundle


@dataclass
class SweepResult:
    trials: list
    summary: analysis.SweepSummary | None
    grid: list  # (value, SweepSummary)
    summary_json: str


def _summarize(trials: list, truth_used: str):
    reports = [r for tr in trials for r in tr.reports]
    if not reports or any(math.isnan(tr.tau) for tr in trials):
        return None
    return analysis.summarize_sweep(reports, {tr.trial: tr.tau for tr in trials}, truth_used)


def sweep(cfg: RunConfig, threads: int = 1) -> SweepResult:
    sections = cfg.env_sections()
    R = cfg.replications
    cache = {}
    if not cfg.regenerate_env_per_trial:
        for gi, (_, sec) in enumerate(sections):
            env = make_env(sec)
            cache[gi] = (env, trial_truth(env, cfg))
    jobs = [(gi, v, sec, gi * R + r) for gi, (v, sec) in enumerate(sections) for r in range(R)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        trials = list(pool.map(lambda j: _run_trial(cfg, *j, cache), jobs))
    trials.sort(key=lambda tr: tr.trial)
    truth_used = {"exact": "exact", "mc": "monte-carlo", "none": "none"}[cfg.truth["method"]]
    pooled = _summarize(trials, truth_used)
    grid = []
    if cfg.env_grid:
        for v, _ in sections:
            grid.append((v, _summarize([tr for tr in trials if tr.grid_value == v], truth_used)))
    doc = {
        "config_hash": cfg.digest(),
        "truth_method": truth_used,
        "replications": R,
        "errors": sum(len(tr.errors) for tr in trials),
        "summary": pooled.to_dict() if pooled else None,
        "grid": [
            {"param": cfg.env_grid["param"], "value": v, "summary": s.to_dict() if s else None} for v, s in grid
        ],
        "trial_tau": [[tr.trial, tr.tau, tr.tau_se] for tr in trials],
    }
    return SweepResult(trials, pooled, grid, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def replications_csv(trials: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPLICATION_HEADER)
    for tr in trials:
        gv = "" if tr.grid_value is None else tr.grid_value
        for r in sorted(tr.reports, key=lambda r: r.estimator_id):
            w.writerow([tr.trial, gv, r.estimator_id, r.params.get("k", ""), repr(r.estimate), repr(tr.tau), ""])
        for name, params, msg in tr.errors:
            w.writerow([tr.trial, gv, name, params.get("k", ""), "", repr(tr.tau), msg])
    return buf.getvalue()


def matrix_csv(param: str, grid: list) -> str:
    """Tidy (grid value x estimator) table for heatmaps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["grid_param", "grid_value"] + analysis.SUMMARY_HEADER)
    for v, s in grid:
        if s is None:
            continue
        for r in s.rows:
            w.writerow([param, v, r.estimator, r.param_k, repr(r.mean), repr(r.bias), repr(r.mae), repr(r.mae_pct), repr(r.std), r.reps])
    return buf.getvalue()


def cmd_sweep(cfg: RunConfig, out_dir, threads: int = 1) -> SweepResult:
    out = _ensure_dir(out_dir)
    started = time.time()
    res = sweep(cfg, threads)
    _write(out / "replications.csv", replications_csv(res.trials))
    if res.summary is not None:
        _write(out / "summary.csv", res.summary.to_csv())
    if res.grid:
        _write(out / "matrix.csv", matrix_csv(cfg.env_grid["param"], res.grid))
    _write(out / "summary.json", res.summary_json)
    _write(out / "manifest.json", manifest(cfg, "sweep", started, {"threads": threads, "mae_pct": analysis.MAE_PCT_NOTE}))
    return res
