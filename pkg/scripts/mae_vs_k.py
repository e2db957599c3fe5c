"""MAE of truncated DQ against k at one fixed mixing level (bias-variance trade-off curve)."""

import argparse

from truncdq.config import RunConfig
from truncdq.runner import cmd_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=150)
    p.add_argument("--ks", type=int, nargs="+", default=[0, 1, 2, 3, 5, 10, 20])
    p.add_argument("--seed", type=int, default=77)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="out/mae_vs_k")
    args = p.parse_args()
    cfg = RunConfig.from_dict(
        {
            "env": {"type": "two_state", "params": {"horizon": 5000, "target_mixing": args.gamma}},
            "estimators": [{"name": "truncated_dq", "k": args.ks}],
            "replications": args.reps,
            "master_seed": args.seed,
            "regenerate_env_per_trial": True,
            "output": {"dir": args.out},
        }
    )
    s = cmd_sweep(cfg, args.out, args.threads).summary
    for k in args.ks:
        r = s.row(f"truncated_dq(k={k})")
        print(f"k={k:<3d} MAE {r.mae:.4f}  |bias| {abs(r.bias):.4f}  std {r.std:.4f}")


if __name__ == "__main__":
    main()
