"""``truncdq`` command line: simulate, truth, estimate, sweep, validate."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from truncdq import estimators as est
from truncdq import runner
from truncdq.config import RunConfig
from truncdq.mdp import ConfigurationError, EstimationError
from truncdq.validate import MUTANTS, run_validation


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigurationError("--config is required")
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    return cfg


def _out(args, cfg: RunConfig | None = None) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg.output["dir"]) if cfg else Path("out")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    paths = runner.cmd_simulate(cfg, _out(args, cfg), args.threads)
    print(f"wrote {len(paths)} trajectories to {_out(args, cfg)}")
    return 0


def cmd_truth(args) -> int:
    cfg = _load(args)
    if args.method:
        cfg.truth["method"] = args.method
        cfg.check()
    bundle = runner.cmd_truth(cfg, _out(args, cfg))
    print(f"tau = {bundle.tau!r} ({bundle.metadata.get('method')})")
    return 0


def cmd_estimate(args) -> int:
    traj = runner.read_trajectory(args.trajectory)
    theta = args.theta
    blocks = None
    if args.block_len:
        blocks = np.arange(len(traj)) // args.block_len
    name = args.estimator
    params = {}
    if name == "dm":
        value = est.dm(traj, theta)
    elif name == "truncated_dq":
        params = {"k": args.k}
        value = est.truncated_dq(traj, args.k, theta)
    elif name == "untruncated_dq":
        value = est.untruncated_dq(traj, theta)
    elif name == "truncated_dq_blocks":
        params = {"k": args.k}
        value = est.truncated_dq_blocks(traj, args.k, theta, blocks=blocks)
    elif name == "switchback_bc":
        params = {"burn_in": args.burn_in}
        value = est.switchback_bc(traj, args.block_len or 1, args.burn_in, blocks=blocks)
    else:
        value, _ = est.stationary_model_baseline(traj, name)
    report = est.EstimateReport(name, params, float(value), args.seed, len(traj))
    text = ",".join(est.CSV_HEADER) + "\n" + report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    res = runner.cmd_sweep(cfg, out, args.threads)
    n_err = sum(len(t.errors) for t in res.trials)
    print(f"{len(res.trials)} trials, {n_err} estimator errors; outputs in {out}")
    if res.summary is not None:
        sys.stdout.write(res.summary.to_csv())
    return 0


def cmd_validate(args) -> int:
    t0 = time.perf_counter()
    report = run_validation(args.level, args.inject_mutant)
    for line in report.lines():
        print(line)
    print(f"elapsed {time.perf_counter() - t0:.1f}s")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--seed", type=int, help="override master_seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory (file for estimate)")
    common.add_argument("--threads", type=int, default=1, help="worker threads across replications")

    p = argparse.ArgumentParser(prog="truncdq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write one trajectory CSV per replication").set_defaults(
        func=cmd_simulate
    )
    t = sub.add_parser("truth", parents=[common], help="exact or Monte-Carlo ground truth as JSON")
    t.add_argument("--method", choices=["exact", "mc"], help="override truth.method")
    t.set_defaults(func=cmd_truth)
    e = sub.add_parser("estimate", parents=[common], help="run one estimator on a trajectory CSV")
    e.add_argument("--trajectory", required=True)
    e.add_argument(
        "--estimator",
        required=True,
        choices=["dm", "truncated_dq", "untruncated_dq", "truncated_dq_blocks", "switchback_bc", "model_ope", "stationary_dq"],
    )
    e.add_argument("--k", type=int, default=0)
    e.add_argument("--theta", type=float, default=0.5)
    e.add_argument("--block-len", type=int, default=0, help="switchback block length in steps")
    e.add_argument("--burn-in", type=float, default=0.0)
    e.set_defaults(func=cmd_estimate)
    sub.add_parser("sweep", parents=[common], help="replications, estimators, truth and summaries").set_defaults(
        func=cmd_sweep
    )
    v = sub.add_parser("validate", parents=[common], help="run the invariant corpus")
    v.add_argument("--level", choices=["fast", "full"], default="fast")
    v.add_argument("--inject-mutant", choices=sorted(MUTANTS), help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
