"""Frozen invariant corpus run by ``truncdq validate``.

Every check uses fixed seeds, so the pass/fail report is identical across
runs. Estimators are looked up on the module at call time, which lets the
window mutant below be swapped in without touching the checks.
"""

from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from truncdq import analysis, estimators
from truncdq import truth as gt
from truncdq.envs.random_env import iid_env, random_finite
from truncdq.mdp import (
    Bernoulli,
    DenseKernels,
    Switchback,
    simulate,
    simulate_many,
    tv_distance,
)

FD_STEP = 1e-5
FD_TOL = 1e-6
IDENTITY_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class ValidationReport:
    level: str
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        out = [f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}" for r in self.results]
        n_fail = sum(not r.passed for r in self.results)
        out.append(f"{len(self.results) - n_fail}/{len(self.results)} checks passed ({self.level})")
        return out


# ----------------------------------------------------------------------
# corpus


def corpus(n: int = 20, seed: int = 2024) -> list:
    """Frozen random finite envs with S <= 5 and T <= 50."""
    gen = np.random.default_rng(seed)
    envs = []
    for i in range(n):
        S = int(gen.integers(2, 6))
        T = int(gen.integers(4, 51))
        envs.append(random_finite(S, T, seed=seed + i, concentration=float(gen.choice([0.5, 1.0, 3.0]))))
    return envs


def naive_truncated_dq(actions, rewards, k: int, theta: float = 0.5) -> float:
    """Double loop over units and window offsets."""
    z = list(actions)
    y = [float(v) for v in rewards]
    T = len(y)
    terms = []
    for u in range(T):
        s = 0.0
        for j in range(u, min(u + k, T - 1) + 1):
            s += y[j]
        w = 1.0 / theta if z[u] == 1 else -1.0 / (1.0 - theta)
        terms.append(w * s)
    return math.fsum(terms) / T


def central_difference(f, x: float, h: float = FD_STEP) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


# ----------------------------------------------------------------------
# checks


def check_fd_gradients(envs) -> CheckResult:
    worst = 0.0
    for env in envs:
        T = env.horizon
        fd = central_difference(lambda th: gt.exact_value(env, th), 0.5)
        worst = max(worst, abs(fd - gt.exact_policy_gradient(env)))
        ks = sorted({0, min(1, T - 1), min(3, T - 1), T - 1})
        grads = gt.truncated_gradients(env, ks)
        for k in ks:
            fd_k = central_difference(lambda th: gt.exact_truncated_value(env, th, k), 0.5)
            worst = max(worst, abs(fd_k - grads[k]))
    return CheckResult("finite-difference gradients", worst <= FD_TOL, f"max |fd - exact| = {worst:.2e} (tol {FD_TOL:g})")


def check_decomposition(envs) -> CheckResult:
    worst, top_mix = 0.0, 0.0
    for env in envs:
        T = env.horizon
        for k in sorted({0, min(1, T - 1), min(3, T - 1), T - 1}):
            d = analysis.decompose_bias(env, k)
            worst = max(worst, abs(d.residual))
            if k == T - 1:
                top_mix = max(top_mix, abs(d.mixing_bias))
    ok = worst <= IDENTITY_TOL and top_mix == 0.0
    return CheckResult(
        "bias decomposition identity", ok, f"max residual {worst:.2e}, mixing bias at k=T-1 {top_mix:.1e}"
    )


def check_window_sums(trials: int = 40, seed: int = 7) -> CheckResult:
    gen = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        T = int(gen.integers(1, 60))
        z = gen.integers(0, 2, T)
        y = gen.normal(size=T) * 10 ** gen.uniform(-3, 3)
        theta = float(gen.uniform(0.1, 0.9))
        for k in {0, min(1, T - 1), min(2, T - 1), T // 2, T - 1}:
            if estimators.truncated_dq((z, y), k, theta) != naive_truncated_dq(z, y, k, theta):
                bad += 1
    return CheckResult("window sums vs naive loop", bad == 0, f"{bad} mismatches (bit-exact comparison)")


def check_dobrushin(trials: int = 200, seed: int = 11) -> CheckResult:
    gen = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        S = int(gen.integers(2, 7))
        P = gen.dirichlet(np.full(S, float(gen.choice([0.2, 1.0, 5.0]))), size=(1, 2, S))
        K = DenseKernels(P)
        g = K.dobrushin()
        mu, nu = gen.dirichlet(np.ones(S)), gen.dirichlet(np.ones(S))
        lhs = tv_distance(mu @ P[0, 0], nu @ P[0, 0])
        worst = max(worst, lhs - g * tv_distance(mu, nu))
        if not 0.0 <= g <= 1.0:
            worst = max(worst, 1.0)
    return CheckResult("Dobrushin contraction", worst <= 1e-12, f"max TV(muP, nuP) - gamma TV(mu, nu) = {worst:.2e}")


def check_determinism(envs) -> CheckResult:
    env = envs[0]
    pol = Bernoulli(0.5)
    a, b = simulate(env, pol, 99, 3), simulate(env, pol, 99, 3)
    batch = simulate_many(env, pol, 99, 5)
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("states", "actions", "rewards"))
    same &= np.array_equal(batch[3].rewards, a.rewards) and np.array_equal(batch[3].states, a.states)
    sw = Switchback(4)
    s1, s2 = simulate(env, sw, 5, 0), simulate(env, sw, 5, 0)
    same &= np.array_equal(s1.actions, s2.actions) and np.array_equal(s1.blocks, s2.blocks)
    return CheckResult("determinism", bool(same), "repeat and batched simulations identical" if same else "mismatch")


def _z_score(vals: np.ndarray, target: float) -> float:
    dev = abs(vals.mean() - target)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    if se == 0:
        return 0.0 if dev == 0 else math.inf
    return float(dev / se)


def check_unbiased(envs, reps: int, z_tol: float = 4.0, seed: int = 31) -> CheckResult:
    """Mean of truncated DQ over many replications vs the exact truncated gradient."""
    worst = 0.0
    for i, env in enumerate(envs):
        T = env.horizon
        ks = sorted({0, 1, 3, T - 1})
        batch = simulate_many(env, Bernoulli(0.5), seed + i, reps)
        grads = gt.truncated_gradients(env, ks)
        for k in ks:
            vals = estimators.truncated_dq((batch.actions, batch.rewards), k)
            worst = max(worst, _z_score(vals, grads[k]))
    return CheckResult(
        f"truncated DQ unbiased ({reps} reps)", worst <= z_tol, f"max |mean - exact| / SE = {worst:.2f} (tol {z_tol:g})"
    )


def check_iid(reps: int, z_tol: float = 4.0) -> CheckResult:
    env = iid_env(3, 30, seed=5, effect=1.0)
    tau = gt.exact_gate(env)[0]
    batch = simulate_many(env, Bernoulli(0.5), 17, reps)
    vals = estimators.dm((batch.actions, batch.rewards))
    z = _z_score(vals, tau)
    return CheckResult("DM unbiased without carryover", z <= z_tol, f"|mean - tau| / SE = {z:.2f}, tau = {tau:.3f}")


def check_switchback(envs) -> CheckResult:
    env = envs[1]
    traj = simulate(env, Switchback(5), 3, 0)
    T = env.horizon
    k0 = estimators.truncated_dq_blocks(traj, 0)
    direct = estimators.dm(traj)
    zb, sums, counts = estimators.block_aggregate(traj.actions, traj.rewards, traj.blocks)
    ok = abs(k0 - direct) <= 1e-12 * max(1.0, abs(direct))
    ok &= bool(np.all(counts[:-1] == 5)) and counts.sum() == T
    detail = f"block k=0 vs per-step DM diff {abs(k0 - direct):.1e}; blocks of 5 partition 1..{T}"
    try:
        estimators.switchback_bc(traj, 5, 5)
        ok = False
    except ValueError:
        pass
    return CheckResult("switchback blocks", bool(ok), detail)


def check_mc_truth(envs, reps: int) -> CheckResult:
    worst = 0.0
    for env in envs:
        tau = gt.exact_gate(env)[0]
        est, se, _ = gt.mc_gate(env, reps, seed=8)
        if se > 0:
            worst = max(worst, abs(est - tau) / se)
    return CheckResult("Monte-Carlo truth vs exact", worst <= 4.0, f"max |mc - exact| / SE = {worst:.2f}")


# ----------------------------------------------------------------------
# mutants


def _window_sums_shifted(rewards, k: int):
    """Window u .. u+k-1 (one step short; empty at k = 0)."""
    y = np.asarray(rewards, dtype=float)
    out = np.zeros_like(y)
    T = y.shape[-1]
    for j in range(0, min(k, T)):
        out[..., : T - j] += y[..., j:]
    return out


MUTANTS = {"window-off-by-one": ("_window_sums", _window_sums_shifted)}


@contextlib.contextmanager
def inject_mutant(name: str | None):
    if name is None:
        yield
        return
    if name not in MUTANTS:
        raise ValueError(f"unknown mutant {name!r}; choose from {sorted(MUTANTS)}")
    attr, fn = MUTANTS[name]
    original = getattr(estimators, attr)
    setattr(estimators, attr, fn)
    try:
        yield
    finally:
        setattr(estimators, attr, original)


# ----------------------------------------------------------------------


def run_validation(level: str = "fast", mutant: str | None = None) -> ValidationReport:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    full = level == "full"
    envs = corpus(20)
    small = [random_finite(3, 12, seed=300 + i) for i in range(5 if full else 3)]
    checks = [
        lambda: check_fd_gradients(envs),
        lambda: check_decomposition(envs),
        lambda: check_window_sums(200 if full else 40),
        lambda: check_dobrushin(2000 if full else 200),
        lambda: check_determinism(envs),
        lambda: check_unbiased(small, 100_000 if full else 20_000),
        lambda: check_iid(50_000 if full else 10_000),
        lambda: check_switchback(envs),
    ]
    if full:
        checks.append(lambda: check_mc_truth(small, 20_000))
    report = ValidationReport(level)
    with inject_mutant(mutant):
        for chk in checks:
            t0 = time.perf_counter()
            res = chk()
            res.seconds = time.perf_counter() - t0
            report.results.append(res)
    return report
