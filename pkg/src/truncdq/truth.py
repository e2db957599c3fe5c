"""Exact ground truth by kernel propagation, plus Monte-Carlo fallbacks.

All exact routines propagate row vectors (state laws) forward or column
vectors (expected future rewards) backward, one kernel at a time, so a call
costs O(T S^2) for dense kernels (O(T S) for birth-death kernels) per
propagated vector. Nothing forms the matrix products P^{a->b} explicitly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from truncdq import rng as rngmod
from truncdq.mdp import (
    AlwaysControl,
    AlwaysTreat,
    ConfigurationError,
    NonstationaryMdp,
    dobrushin_coefficient,
    kernel_deviation,
    simulate_many,
)

# replication offset for truth runs; experiment replications stay far below it
TRUTH_REPLICATION_BASE = 1 << 40


def _fwd(env: NonstationaryMdp, v: np.ndarray, t: int, theta: float) -> np.ndarray:
    K = env.kernels
    if theta == 1.0:
        return K.forward(v, t, 1)
    if theta == 0.0:
        return K.forward(v, t, 0)
    return theta * K.forward(v, t, 1) + (1.0 - theta) * K.forward(v, t, 0)


def _bwd(env: NonstationaryMdp, h: np.ndarray, t: int, theta: float) -> np.ndarray:
    K = env.kernels
    if theta == 1.0:
        return K.backward(h, t, 1)
    if theta == 0.0:
        return K.backward(h, t, 0)
    return theta * K.backward(h, t, 1) + (1.0 - theta) * K.backward(h, t, 0)


def _r(env: NonstationaryMdp, t: int, theta: float) -> np.ndarray:
    r = env.rewards_at(t)
    if theta == 1.0:
        return r[:, 1]
    if theta == 0.0:
        return r[:, 0]
    return theta * r[:, 1] + (1.0 - theta) * r[:, 0]


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise ConfigurationError(f"theta must lie in [0, 1], got {theta}")
    return theta


def _check_k(env: NonstationaryMdp, k: int) -> int:
    if not 0 <= k <= env.horizon - 1:
        raise ConfigurationError(f"truncation k={k} outside [0, {env.horizon - 1}]")
    return int(k)


def state_laws(env: NonstationaryMdp, theta: float) -> np.ndarray:
    """Marginal laws of X_t under pi_theta, shape (T, S)."""
    theta = _check_theta(theta)
    T = env.horizon
    out = np.empty((T, env.num_states))
    d = env.initial_dist.copy()
    for t in range(T):
        out[t] = d
        if t < T - 1:
            d = _fwd(env, d, t, theta)
    return out


def per_step_means(env: NonstationaryMdp, theta: float) -> np.ndarray:
    """E[Y_t] under pi_theta for every t."""
    laws = state_laws(env, theta)
    return np.array([laws[t] @ _r(env, t, theta) for t in range(env.horizon)])


def exact_value(env: NonstationaryMdp, theta: float) -> float:
    """J(theta): horizon-averaged expected reward under Bernoulli(theta) assignment."""
    return float(np.mean(per_step_means(env, theta)))


def exact_gate(env: NonstationaryMdp) -> tuple[float, np.ndarray]:
    """(tau, tau_t) with tau_t = E_treat[Y_t] - E_control[Y_t]."""
    tau_t = per_step_means(env, 1.0) - per_step_means(env, 0.0)
    return float(np.mean(tau_t)), tau_t


def q_values(env: NonstationaryMdp) -> np.ndarray:
    """Untruncated Q^t_{1/2}(z) for all t, shape (T, 2).

    Q^t(z) = d_t . (r_z(t) + P_z^t V_{t+1}) where V_{t+1}(x) is the expected
    reward still to come from state x at time t+1 under pi_{1/2}.
    """
    T, S = env.horizon, env.num_states
    laws = state_laws(env, 0.5)
    V = np.zeros(S)
    Q = np.empty((T, 2))
    for t in range(T - 1, -1, -1):
        r = env.rewards_at(t)
        for z in (0, 1):
            future = env.kernels.backward(V, t, z) if t < T - 1 else 0.0
            Q[t, z] = laws[t] @ (r[:, z] + future)
        V = _r(env, t, 0.5) + (_bwd(env, V, t, 0.5) if t < T - 1 else 0.0)
    return Q


def exact_policy_gradient(env: NonstationaryMdp) -> float:
    """dJ/dtheta at 1/2 as the horizon-average of Q^t(1) - Q^t(0)."""
    Q = q_values(env)
    return float(np.mean(Q[:, 1] - Q[:, 0]))


def truncated_q_values(env: NonstationaryMdp, k: int) -> np.ndarray:
    """Truncated Q^{t,k}_{1/2}(z): rewards Y_t..Y_{min(t+k, T)} given Z_t = z, shape (T, 2)."""
    k = _check_k(env, k)
    T, S = env.horizon, env.num_states
    Q = np.zeros((T, 2))
    # stacks[z][a - 1] = law at the current time of a branch that took action z exactly a steps ago
    stacks = [np.zeros((k, S)), np.zeros((k, S))]
    d = env.initial_dist.copy()
    ages = np.arange(1, k + 1)
    for t in range(T):
        r_half = _r(env, t, 0.5)
        r = env.rewards_at(t)
        Q[t] += d @ r
        n = min(k, t)
        if n:
            for z in (0, 1):
                Q[t - ages[:n], z] += stacks[z][:n] @ r_half
        if t < T - 1 and k:
            for z in (0, 1):
                moved = _fwd(env, stacks[z][: k - 1], t, 0.5) if k > 1 else stacks[z][:0]
                stacks[z] = np.vstack([env.kernels.forward(d, t, z)[None], moved])
            d = _fwd(env, d, t, 0.5)
        elif t < T - 1:
            d = _fwd(env, d, t, 0.5)
    return Q


def truncated_gradients(env: NonstationaryMdp, ks: Iterable[int]) -> dict[int, float]:
    """grad J_k(1/2) for several k in one forward pass.

    The one-step perturbation e_u = d_u (P_1^u - P_0^u) is propagated under
    pi_{1/2}; its contribution a steps later is added to every k >= a.
    """
    ks = sorted({_check_k(env, k) for k in ks})
    T, S = env.horizon, env.num_states
    kmax = ks[-1]
    by_age = np.zeros(kmax + 1)
    stack = np.zeros((kmax, S))
    d = env.initial_dist.copy()
    for t in range(T):
        r = env.rewards_at(t)
        by_age[0] += d @ (r[:, 1] - r[:, 0])
        n = min(kmax, t)
        if n:
            by_age[1 : n + 1] += stack[:n] @ _r(env, t, 0.5)
        if t < T - 1:
            if kmax:
                e = env.kernels.forward(d, t, 1) - env.kernels.forward(d, t, 0)
                moved = _fwd(env, stack[: kmax - 1], t, 0.5) if kmax > 1 else stack[:0]
                stack = np.vstack([e[None], moved])
            d = _fwd(env, d, t, 0.5)
    cum = np.cumsum(by_age) / T
    return {k: float(cum[k]) for k in ks}


def exact_truncated_gradient(env: NonstationaryMdp, k: int) -> float:
    """grad J_k(1/2)."""
    return truncated_gradients(env, [k])[k]


def exact_truncated_value(env: NonstationaryMdp, theta: float, k: int) -> float:
    """J_k(theta): pi_{1/2} drives the early transitions, pi_theta the last k and the reward at t."""
    theta = _check_theta(theta)
    k = _check_k(env, k)
    T = env.horizon
    if k == T - 1:
        return exact_value(env, theta)
    # L[a] = law after pi_{1/2} transitions followed by a pi_theta transitions
    L = np.tile(env.initial_dist, (k + 1, 1))
    total = np.empty(T)
    for t in range(T):
        total[t] = L[min(k, t)] @ _r(env, t, theta)
        if t < T - 1:
            head = _fwd(env, L[:1], t, 0.5)
            if k:
                L = np.vstack([head, _fwd(env, L[:k], t, theta)])
            else:
                L = head
    return float(np.mean(total))


# --------------------------------------------------------------------------
# Monte Carlo


def mc_gate(source, reps: int, seed: int, paired: bool = True) -> tuple[float, float, np.ndarray]:
    """Monte-Carlo GATE from always-treat / always-control runs.

    ``source`` is a NonstationaryMdp or any simulator exposing
    ``simulate(policy, seed, replication) -> Trajectory``. With ``paired`` the
    two arms of replication i share transition and reward streams.

    Returns (estimate, standard error, per-replication differences).
    """
    if reps < 2:
        raise ConfigurationError("mc_gate needs reps >= 2")
    base = TRUTH_REPLICATION_BASE
    ctrl_base = base if paired else base + reps
    if isinstance(source, NonstationaryMdp):
        treat = simulate_many(source, AlwaysTreat(), seed, reps, start=base).rewards.mean(axis=1)
        ctrl = simulate_many(source, AlwaysControl(), seed, reps, start=ctrl_base).rewards.mean(axis=1)
    else:
        treat = np.array(
            [source.simulate(AlwaysTreat(), seed, base + i).rewards.mean() for i in range(reps)]
        )
        ctrl = np.array(
            [source.simulate(AlwaysControl(), seed, ctrl_base + i).rewards.mean() for i in range(reps)]
        )
    diffs = treat - ctrl
    return float(diffs.mean()), float(diffs.std(ddof=1) / np.sqrt(reps)), diffs


# --------------------------------------------------------------------------
# bundle


@dataclass
class TruthBundle:
    tau: float
    tau_t: list[float]
    J_grid_theta: list[float]
    J_grid: list[float]
    grad_J_half: float | None
    Jk_k: list[int]
    Jk_theta: list[float]
    Jk_values: list[float]
    grad_Jk_k: list[int]
    grad_Jk_half: list[float]
    delta: float | None
    gamma_hat: float | None
    per_step_q: list[list[float]] | None = None
    per_step_qk: list[list[float]] | None = None
    metadata: dict = field(default_factory=dict)

    def grad_jk(self, k: int) -> float:
        return self.grad_Jk_half[self.grad_Jk_k.index(k)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TruthBundle":
        return cls(**json.loads(text))


def compute_truth(
    env: NonstationaryMdp,
    thetas: Sequence[float] = (0.0, 0.5, 1.0),
    ks: Sequence[int] = (),
    jk_thetas: Sequence[float] = (0.0, 1.0),
    per_step: bool = False,
    per_step_k: int | None = None,
) -> TruthBundle:
    """Exact TruthBundle for a finite-state environment."""
    T = env.horizon
    ks = sorted({min(int(k), T - 1) for k in ks})
    tau, tau_t = exact_gate(env)
    grads = truncated_gradients(env, ks) if ks else {}
    jk_k, jk_th, jk_v = [], [], []
    for k in ks:
        for th in jk_thetas:
            jk_k.append(k)
            jk_th.append(float(th))
            jk_v.append(exact_truncated_value(env, th, k))
    M, approx = env.reward_bound()
    q = q_values(env) if per_step else None
    qk = truncated_q_values(env, per_step_k) if per_step and per_step_k is not None else None
    return TruthBundle(
        tau=tau,
        tau_t=tau_t.tolist(),
        J_grid_theta=[float(t) for t in thetas],
        J_grid=[exact_value(env, t) for t in thetas],
        grad_J_half=float(np.mean(q[:, 1] - q[:, 0])) if q is not None else exact_policy_gradient(env),
        Jk_k=jk_k,
        Jk_theta=jk_th,
        Jk_values=jk_v,
        grad_Jk_k=list(grads),
        grad_Jk_half=list(grads.values()),
        delta=kernel_deviation(env),
        gamma_hat=dobrushin_coefficient(env),
        per_step_q=None if q is None else q.tolist(),
        per_step_qk=None if qk is None else qk.tolist(),
        metadata={
            "method": "exact",
            "reward_bound": M,
            "bound_approximate": approx,
            "per_step_k": per_step_k,
        },
    )


def mc_truth(source, reps: int, seed: int, paired: bool = True) -> TruthBundle:
    """TruthBundle holding only the Monte-Carlo GATE (simulation-only environments)."""
    est, se, _ = mc_gate(source, reps, seed, paired)
    delta = gamma = None
    if isinstance(source, NonstationaryMdp):
        delta, gamma = kernel_deviation(source), dobrushin_coefficient(source)
    return TruthBundle(
        tau=est,
        tau_t=[],
        J_grid_theta=[],
        J_grid=[],
        grad_J_half=None,
        Jk_k=[],
        Jk_theta=[],
        Jk_values=[],
        grad_Jk_k=[],
        grad_Jk_half=[],
        delta=delta,
        gamma_hat=gamma,
        metadata={"method": "monte-carlo", "reps": reps, "paired": paired, "tau_se": se},
    )
