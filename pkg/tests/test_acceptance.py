"""Acceptance suite. Each test prints one ``ACCEPTANCE n PASS|FAIL`` line and then asserts.

Run with ``pytest tests/test_acceptance.py -s -v``. The lines are printed even
without ``-s`` because output capture is disabled around them.
"""

import math
import time

import numpy as np
import pytest

from truncdq import analysis, runner
from truncdq import truth as gt
from truncdq.config import RunConfig
from truncdq.envs.random_env import random_finite
from truncdq.envs.two_state import TwoStateConfig, build_two_state
from truncdq.estimators import truncated_dq
from truncdq.mdp import Bernoulli, simulate_many
from truncdq.validate import central_difference, corpus, run_validation

FD_TOL = 1e-6
SLOPE_DELTAS = [0.02, 0.05, 0.1, 0.2]


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed=None):
        tail = f" [{elapsed:.1f}s]" if elapsed is not None else ""
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}{tail}")
        assert ok, detail

    return emit


def test_acceptance_1_gradient_identities(report):
    t0 = time.perf_counter()
    worst = 0.0
    for env in corpus(20):
        T = env.horizon
        fd = central_difference(lambda th: gt.exact_value(env, th), 0.5)
        worst = max(worst, abs(gt.exact_policy_gradient(env) - fd))
        for k in sorted({0, 1, 3, T - 1} & set(range(T))):
            fd = central_difference(lambda th: gt.exact_truncated_value(env, th, k), 0.5)
            worst = max(worst, abs(gt.exact_truncated_gradient(env, k) - fd))
    elapsed = time.perf_counter() - t0
    report(1, worst <= FD_TOL and elapsed < 10, f"max |exact - finite difference| = {worst:.2e} (tol {FD_TOL:g})", elapsed)


def test_acceptance_2_truncated_dq_unbiased(report):
    t0 = time.perf_counter()
    reps, chunk = 100_000, 10_000
    worst, where = 0.0, None
    for i in range(5):
        env = random_finite(5, 50, seed=500 + i)
        ks = [0, 1, 3, env.horizon - 1]
        grads = gt.truncated_gradients(env, ks)
        vals = {k: [] for k in ks}
        for start in range(0, reps, chunk):
            b = simulate_many(env, Bernoulli(0.5), 900 + i, chunk, start=start)
            for k in ks:
                vals[k].append(truncated_dq((b.actions, b.rewards), k))
        for k in ks:
            v = np.concatenate(vals[k])
            z = abs(v.mean() - grads[k]) / (v.std(ddof=1) / math.sqrt(len(v)))
            if z > worst:
                worst, where = z, (i, k)
    elapsed = time.perf_counter() - t0
    report(2, worst <= 3.0 and elapsed < 120, f"max |mean - exact| / SE = {worst:.2f} at env/k {where} (tol 3)", elapsed)


def test_acceptance_3_decomposition_identity(report):
    t0 = time.perf_counter()
    worst, mix_full = 0.0, 0.0
    for env in corpus(20):
        T = env.horizon
        for k in range(T):
            worst = max(worst, abs(analysis.decompose_bias(env, k).residual))
        mix_full = max(mix_full, abs(analysis.decompose_bias(env, T - 1).mixing_bias))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and mix_full == 0.0 and elapsed < 10
    report(3, ok, f"max residual {worst:.1e}; max |mixing bias| at k=T-1 is {mix_full!r}", elapsed)


def _two_state_sweep(values, reps, ks, seed):
    return RunConfig.from_dict(
        {
            "env": {"type": "two_state", "params": {"horizon": 5000}},
            "estimators": [{"name": "truncated_dq", "k": ks}],
            "replications": reps,
            "master_seed": seed,
            "regenerate_env_per_trial": True,
            "env_grid": {"param": "target_mixing", "values": values},
        }
    )


def test_acceptance_4_regenerated_two_state_table(report):
    t0 = time.perf_counter()
    grid = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
    res = runner.sweep(_two_state_sweep(grid, 43, [0, 1, 3, 5, 10, 50, 100, "T"], seed=2026))
    s = res.summary
    m = {r.estimator: r.mae_pct for r in s.rows}
    dm, k3 = m["truncated_dq(k=0)"], m["truncated_dq(k=3)"]
    best = min(m[f"truncated_dq(k={k})"] for k in (1, 3, 5))
    full = m["truncated_dq(k=T)"]
    checks = {
        "a": 35 <= dm <= 65,
        "b": best <= 0.75 * dm,
        "c": m["truncated_dq(k=100)"] > 5 * k3,
        "d": full > 50 * k3,
    }
    elapsed = time.perf_counter() - t0
    detail = (
        f"{len(res.trials)} trials; MAE% k=0 {dm:.1f}, k=1 {m['truncated_dq(k=1)']:.1f}, k=3 {k3:.1f}, "
        f"k=5 {m['truncated_dq(k=5)']:.1f}, k=100 {m['truncated_dq(k=100)']:.1f}, untruncated {full:.0f}; "
        + " ".join(f"({c}) {'ok' if v else 'no'}" for c, v in checks.items())
    )
    report(4, all(checks.values()) and len(res.trials) >= 300 and elapsed < 1200, detail, elapsed)


def test_acceptance_5_interior_minimum_in_k(report):
    t0 = time.perf_counter()
    ks = [0, 1, 2, 3, 5, 10, 20]
    res = runner.sweep(_two_state_sweep([0.5], 150, ks, seed=77))
    mae = [res.summary.row(f"truncated_dq(k={k})").mae for k in ks]
    best = ks[int(np.argmin(mae))]
    elapsed = time.perf_counter() - t0
    curve = ", ".join(f"k={k}: {v:.3f}" for k, v in zip(ks, mae))
    report(5, best not in (0, 20) and elapsed < 600, f"argmin k = {best}; MAE {curve}", elapsed)


def _slope_family(delta):
    cfg = TwoStateConfig(
        horizon=5000,
        kernel_shift=delta,
        seed=0,
        orientation="persistent",
        shift_by_state=(1.0, 0.5),
        reward_means=((0.0, 1.0), (0.0, -1.0)),
    )
    return build_two_state(cfg)


def test_acceptance_6_taylor_slope_and_variance_rate(report):
    t0 = time.perf_counter()
    rep = analysis.bound_scaling_report(_slope_family, [3], SLOPE_DELTAS)
    slope = rep.taylor_slope[3]
    default = analysis.bound_scaling_report(
        lambda d: build_two_state(TwoStateConfig(horizon=5000, kernel_shift=d, seed=0)), [3], SLOPE_DELTAS
    ).taylor_slope[3]

    env = build_two_state(TwoStateConfig(horizon=5000, kernel_shift=0.1, seed=5))
    reps, chunk = 10_000, 1000

    def variance(e):
        vals = [
            truncated_dq(simulate_many(e, Bernoulli(0.5), 77, chunk, start=s), 3) for s in range(0, reps, chunk)
        ]
        return np.concatenate(vals).var(ddof=1)

    ratio = variance(env) / variance(env.truncate(2500))
    elapsed = time.perf_counter() - t0
    ok = 1.7 <= slope <= 2.3 and 0.4 <= ratio <= 0.6 and elapsed < 900
    detail = (
        f"log-log slope of |taylor error| at k=3 = {slope:.3f} (uniform-shift family: {default:.3f}); "
        f"Var(T=5000)/Var(T=2500) = {ratio:.3f}"
    )
    report(6, ok, detail, elapsed)


def test_acceptance_7_queue_truncation_beats_dm_and_baselines(report):
    t0 = time.perf_counter()
    ks = [1, 2, 5, 10, 15, 20, 30, 40, 50, 60]
    cfg = RunConfig.from_dict(
        {
            "env": {"type": "queue", "params": {"weeks": 1}},
            "estimators": [{"name": "dm"}, {"name": "truncated_dq", "k": ks}, {"name": "model_ope"}, {"name": "stationary_dq"}],
            "replications": 100,
            "master_seed": 1,
            "truth": {"method": "mc", "reps": 100, "paired": True},
        }
    )
    s = runner.sweep(cfg).summary
    dm = abs(s.row("dm").bias)
    dq = {k: abs(s.row(f"truncated_dq(k={k})").bias) for k in ks}
    best_k = min(dq, key=dq.get)
    base = min(abs(s.row("model_ope").bias), abs(s.row("stationary_dq").bias))
    elapsed = time.perf_counter() - t0
    ok = dq[best_k] <= 0.5 * dm and base > dq[best_k] and elapsed < 1800
    detail = f"|bias| DM {dm:.4f}, best truncated k={best_k} {dq[best_k]:.4f}, best stationary baseline {base:.4f}"
    report(7, ok, detail, elapsed)


def test_acceptance_8_rideshare_block_truncation(report):
    t0 = time.perf_counter()
    cfg = RunConfig.from_dict(
        {
            "env": {"type": "rideshare", "params": {}},
            "design": {"policy": "switchback", "block_len": 10},
            "estimators": [{"name": "truncated_dq_blocks", "k": [0, 1, 2, 3, 4, 5, 6]}],
            "replications": 20,
            "master_seed": 7,
            "truth": {"method": "mc", "reps": 20, "paired": True},
        }
    )
    s = runner.sweep(cfg).summary
    bias = [abs(s.row(f"truncated_dq_blocks(k={k})").bias) for k in range(7)]
    wins = sum(b < bias[0] for b in bias[1:])
    elapsed = time.perf_counter() - t0
    detail = f"{wins}/6 k values beat block DM; |bias| by k: " + ", ".join(f"{b:.3f}" for b in bias)
    report(8, wins >= 4 and elapsed < 1800, detail, elapsed)


def test_acceptance_9_validation_catches_window_mutant(report):
    t0 = time.perf_counter()
    clean = run_validation("full")
    mutant = run_validation("full", "window-off-by-one")
    elapsed = time.perf_counter() - t0
    failed = [c.name for c in mutant.results if not c.passed]
    detail = f"pristine {'passes' if clean.passed else 'fails'}; mutant fails {len(failed)} check(s): {', '.join(failed)}"
    report(9, clean.passed and not mutant.passed, detail, elapsed)
