"""Truncated DQ, DM and stationary model baselines on the uniformized queue with Monte-Carlo truth."""

import argparse

from truncdq.config import RunConfig
from truncdq.runner import cmd_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--weeks", type=int, default=1)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--truth-reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="out/queue")
    args = p.parse_args()
    cfg = RunConfig.from_dict(
        {
            "env": {"type": "queue", "params": {"weeks": args.weeks}},
            "estimators": [
                {"name": "dm"},
                {"name": "truncated_dq", "k": [1, 2, 5, 10, 15, 20, 30, 40, 50, 60]},
                {"name": "model_ope"},
                {"name": "stationary_dq"},
            ],
            "replications": args.reps,
            "master_seed": args.seed,
            "truth": {"method": "mc", "reps": args.truth_reps, "paired": True},
            "output": {"dir": args.out},
        }
    )
    res = cmd_sweep(cfg, args.out, args.threads)
    print(f"tau (MC) = {res.trials[0].tau:.4f} +/- {res.trials[0].tau_se:.4f}")
    for r in res.summary.rows:
        print(f"{r.estimator:>22}  bias {r.bias:+.4f}  std {r.std:.4f}")


if __name__ == "__main__":
    main()
