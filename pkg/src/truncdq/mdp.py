"""Nonstationary finite-state MDPs, assignment policies and trajectory simulation.

Time is 0-based internally: ``kernels.matrix(t, z)`` governs ``X_t -> X_{t+1}``
for ``t = 0..T-2``; the kernel at ``T-1`` exists but is never used by a
length-``T`` trajectory. Files and reports use 1-based time.

Total variation on finite spaces is ``0.5 * sum |p - q|`` everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from truncdq import rng as rngmod

ROW_TOL = 1e-12


class ConfigurationError(ValueError):
    """Invalid environment, policy or run configuration."""


class EstimationError(RuntimeError):
    """An estimator cannot be evaluated on the given data."""


def tv_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Total variation along the last axis."""
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


def _pairwise_row_tv(P: np.ndarray) -> float:
    """Max TV over all row pairs of one or a stack of row-stochastic matrices."""
    P = np.asarray(P)
    if P.shape[-1] == 1:
        return 0.0
    diff = np.abs(P[..., :, None, :] - P[..., None, :, :]).sum(axis=-1)
    return float(min(0.5 * diff.max(), 1.0))


# --------------------------------------------------------------------------
# kernel representations


class DenseKernels:
    """Per-time dense kernels stored as an array of shape (T, 2, S, S)."""

    def __init__(self, P: np.ndarray):
        P = np.ascontiguousarray(P, dtype=float)
        if P.ndim != 4 or P.shape[1] != 2 or P.shape[2] != P.shape[3]:
            raise ConfigurationError(f"dense kernels must have shape (T, 2, S, S), got {P.shape}")
        self.P = P
        self._cum = np.cumsum(P, axis=-1)

    @property
    def horizon(self) -> int:
        return self.P.shape[0]

    @property
    def num_states(self) -> int:
        return self.P.shape[2]

    def validate(self) -> None:
        if (self.P < 0).any():
            t, z, x, _ = np.argwhere(self.P < 0)[0]
            raise ConfigurationError(f"negative kernel entry at t={t + 1}, z={z}, x={x}")
        err = np.abs(self.P.sum(axis=-1) - 1.0)
        if (err > ROW_TOL).any():
            t, z, x = np.argwhere(err > ROW_TOL)[0]
            raise ConfigurationError(f"kernel row does not sum to 1 at t={t + 1}, z={z}, x={x}")

    def matrix(self, t: int, z: int) -> np.ndarray:
        return self.P[t, z]

    def forward(self, v: np.ndarray, t: int, z: int) -> np.ndarray:
        return v @ self.P[t, z]

    def backward(self, h: np.ndarray, t: int, z: int) -> np.ndarray:
        return self.P[t, z] @ h

    def sample(self, t: int, z: np.ndarray, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        cum = self._cum[t, z, x]
        nxt = (u[:, None] >= cum).sum(axis=-1)
        return np.minimum(nxt, self.num_states - 1)

    def deviation(self) -> float:
        return float(tv_distance(self.P[:, 1], self.P[:, 0]).max())

    def dobrushin(self) -> float:
        out = 0.0
        step = max(1, 2_000_000 // max(1, 2 * self.num_states**3))
        for t0 in range(0, self.horizon, step):
            out = max(out, _pairwise_row_tv(self.P[t0 : t0 + step]))
        return out

    def truncate(self, horizon: int) -> "DenseKernels":
        return DenseKernels(self.P[:horizon])


class BirthDeathKernels:
    """Tridiagonal kernels given by per-step up/down probabilities of shape (T, 2, S)."""

    def __init__(self, up: np.ndarray, down: np.ndarray):
        self.up = np.ascontiguousarray(up, dtype=float)
        self.down = np.ascontiguousarray(down, dtype=float)
        if self.up.shape != self.down.shape or self.up.ndim != 3 or self.up.shape[1] != 2:
            raise ConfigurationError("birth-death kernels need matching (T, 2, S) up/down arrays")
        self.stay = 1.0 - self.up - self.down

    @property
    def horizon(self) -> int:
        return self.up.shape[0]

    @property
    def num_states(self) -> int:
        return self.up.shape[2]

    def validate(self) -> None:
        if (self.up[..., -1] != 0).any() or (self.down[..., 0] != 0).any():
            raise ConfigurationError("birth-death kernel leaves the state space")
        bad = (self.up < 0) | (self.down < 0) | (self.stay < -ROW_TOL)
        if bad.any():
            t, z, k = np.argwhere(bad)[0]
            raise ConfigurationError(
                f"uniformization violated at t={t + 1}, z={z}, k={k}: "
                f"up={self.up[t, z, k]:.4g}, down={self.down[t, z, k]:.4g}"
            )

    def matrix(self, t: int, z: int) -> np.ndarray:
        S = self.num_states
        M = np.diag(self.stay[t, z])
        idx = np.arange(S - 1)
        M[idx, idx + 1] = self.up[t, z, :-1]
        M[idx + 1, idx] = self.down[t, z, 1:]
        return M

    def forward(self, v: np.ndarray, t: int, z: int) -> np.ndarray:
        up, down, stay = self.up[t, z], self.down[t, z], self.stay[t, z]
        out = v * stay
        out[..., 1:] += v[..., :-1] * up[:-1]
        out[..., :-1] += v[..., 1:] * down[1:]
        return out

    def backward(self, h: np.ndarray, t: int, z: int) -> np.ndarray:
        up, down, stay = self.up[t, z], self.down[t, z], self.stay[t, z]
        if h.ndim == 2:
            up, down, stay = up[:, None], down[:, None], stay[:, None]
        out = stay * h
        out[:-1] += up[:-1] * h[1:]
        out[1:] += down[1:] * h[:-1]
        return out

    def sample(self, t: int, z: np.ndarray, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        up = self.up[t, z, x]
        down = self.down[t, z, x]
        go_up = u < up
        go_down = (~go_up) & (u < up + down)
        return x + go_up.astype(np.int64) - go_down.astype(np.int64)

    def deviation(self) -> float:
        d = np.abs(self.up[:, 1] - self.up[:, 0]) + np.abs(self.down[:, 1] - self.down[:, 0])
        d = d + np.abs(self.stay[:, 1] - self.stay[:, 0])
        return float(0.5 * d.max())

    def dobrushin(self) -> float:
        # rows three or more apart have disjoint supports
        if self.num_states >= 4:
            return 1.0
        return max(
            _pairwise_row_tv(self.matrix(t, z)) for t in range(self.horizon) for z in (0, 1)
        )

    def truncate(self, horizon: int) -> "BirthDeathKernels":
        return BirthDeathKernels(self.up[:horizon], self.down[:horizon])


class FunctionKernels:
    """Kernels produced on demand by ``fn(t, z) -> (S, S) matrix``."""

    def __init__(self, fn: Callable[[int, int], np.ndarray], horizon: int, num_states: int):
        self.fn = fn
        self._horizon = int(horizon)
        self._num_states = int(num_states)

    @property
    def horizon(self) -> int:
        return self._horizon

    @property
    def num_states(self) -> int:
        return self._num_states

    def validate(self) -> None:
        for t in {0, self._horizon - 1}:
            for z in (0, 1):
                DenseKernels(self.fn(t, z)[None, None].repeat(2, axis=1)).validate()

    def matrix(self, t: int, z: int) -> np.ndarray:
        return np.asarray(self.fn(t, z), dtype=float)

    def forward(self, v: np.ndarray, t: int, z: int) -> np.ndarray:
        return v @ self.matrix(t, z)

    def backward(self, h: np.ndarray, t: int, z: int) -> np.ndarray:
        return self.matrix(t, z) @ h

    def sample(self, t: int, z: np.ndarray, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        cum = np.cumsum(np.stack([self.matrix(t, 0), self.matrix(t, 1)]), axis=-1)[z, x]
        return np.minimum((u[:, None] >= cum).sum(axis=-1), self._num_states - 1)

    def deviation(self) -> float:
        return max(
            float(tv_distance(self.matrix(t, 1), self.matrix(t, 0)).max())
            for t in range(self._horizon)
        )

    def dobrushin(self) -> float:
        return max(
            _pairwise_row_tv(self.matrix(t, z)) for t in range(self._horizon) for z in (0, 1)
        )

    def truncate(self, horizon: int) -> "FunctionKernels":
        return FunctionKernels(self.fn, horizon, self._num_states)


Kernels = Union[DenseKernels, BirthDeathKernels, FunctionKernels]


# --------------------------------------------------------------------------
# environment


@dataclass(frozen=True)
class RewardNoise:
    """Reward noise around r(x, z).

    ``gaussian`` adds N(0, scale^2); ``uniform`` adds U(-scale, scale);
    ``bernoulli`` draws Y ~ Bernoulli(r(x, z)) and ignores ``scale``.
    """

    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "uniform", "bernoulli"):
            raise ConfigurationError(f"unknown reward noise {self.kind!r}")
        if self.scale < 0:
            raise ConfigurationError("reward noise scale must be >= 0")


@dataclass(frozen=True, eq=False)
class NonstationaryMdp:
    kernels: Kernels
    reward_means: np.ndarray  # (S, 2) or time-varying (T, S, 2)
    initial_dist: np.ndarray
    reward_noise: RewardNoise = field(default_factory=RewardNoise)
    name: str = "mdp"

    def __post_init__(self):
        rho = np.asarray(self.initial_dist, dtype=float)
        r = np.asarray(self.reward_means, dtype=float)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "reward_means", r)
        S, T = self.kernels.num_states, self.kernels.horizon
        if T < 1:
            raise ConfigurationError("horizon must be >= 1")
        if rho.shape != (S,) or (rho < 0).any() or abs(rho.sum() - 1.0) > ROW_TOL:
            raise ConfigurationError("initial_dist must be a probability vector over the states")
        if r.shape not in ((S, 2), (T, S, 2)):
            raise ConfigurationError(f"reward_means must be (S, 2) or (T, S, 2), got {r.shape}")
        if not np.isfinite(r).all():
            raise ConfigurationError("reward_means must be finite")
        self.kernels.validate()

    @property
    def horizon(self) -> int:
        return self.kernels.horizon

    @property
    def num_states(self) -> int:
        return self.kernels.num_states

    def rewards_at(self, t: int) -> np.ndarray:
        """Mean rewards r(., .) at 0-based time t, shape (S, 2)."""
        return self.reward_means if self.reward_means.ndim == 2 else self.reward_means[t]

    def reward_bound(self) -> tuple[float, bool]:
        """(M, approximate). Gaussian noise has no a.s. bound; M uses |r|max + 4 sigma."""
        base = float(np.abs(self.reward_means).max())
        kind, scale = self.reward_noise.kind, self.reward_noise.scale
        if kind == "gaussian" and scale > 0:
            return base + 4 * scale, True
        if kind == "uniform":
            return base + scale, False
        if kind == "bernoulli":
            return max(base, 1.0), False
        return base, False

    def truncate(self, horizon: int) -> "NonstationaryMdp":
        """The same environment restricted to its first ``horizon`` steps."""
        r = self.reward_means if self.reward_means.ndim == 2 else self.reward_means[:horizon]
        return NonstationaryMdp(
            self.kernels.truncate(horizon), r, self.initial_dist, self.reward_noise, self.name
        )


def kernel_deviation(env: NonstationaryMdp) -> float:
    """sup over t, x of TV(P_1^t(x, .), P_0^t(x, .))."""
    return env.kernels.deviation()


def dobrushin_coefficient(env: NonstationaryMdp) -> float:
    """Max over t, z of the Dobrushin ergodicity coefficient of P_z^t."""
    return env.kernels.dobrushin()


# --------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class AlwaysTreat:
    @property
    def theta(self) -> float:
        return 1.0

    def draw(self, horizon: int, gen: np.random.Generator):
        return np.ones(horizon, dtype=np.int64), None

    def describe(self) -> dict:
        return {"type": "always_treat"}


@dataclass(frozen=True)
class AlwaysControl:
    @property
    def theta(self) -> float:
        return 0.0

    def draw(self, horizon: int, gen: np.random.Generator):
        return np.zeros(horizon, dtype=np.int64), None

    def describe(self) -> dict:
        return {"type": "always_control"}


@dataclass(frozen=True)
class Bernoulli:
    theta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ConfigurationError("Bernoulli theta must lie in (0, 1)")

    def draw(self, horizon: int, gen: np.random.Generator):
        return (gen.random(horizon) < self.theta).astype(np.int64), None

    def describe(self) -> dict:
        return {"type": "bernoulli", "theta": self.theta}


@dataclass(frozen=True)
class Switchback:
    """One Bernoulli(theta) draw per block of ``interval_len`` consecutive steps."""

    interval_len: int
    theta: float = 0.5

    def __post_init__(self):
        if self.interval_len < 1:
            raise ConfigurationError("switchback interval_len must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise ConfigurationError("switchback theta must lie in (0, 1)")

    def block_draws(self, num_blocks: int, gen: np.random.Generator) -> np.ndarray:
        return (gen.random(num_blocks) < self.theta).astype(np.int64)

    def draw(self, horizon: int, gen: np.random.Generator):
        blocks = np.arange(horizon) // self.interval_len
        z = self.block_draws(int(blocks[-1]) + 1, gen)
        return z[blocks], blocks

    def describe(self) -> dict:
        return {"type": "switchback", "interval_len": self.interval_len, "theta": self.theta}


Policy = Union[AlwaysTreat, AlwaysControl, Bernoulli, Switchback]


def policy_from_dict(d: dict) -> Policy:
    kind = d.get("type")
    if kind == "always_treat":
        return AlwaysTreat()
    if kind == "always_control":
        return AlwaysControl()
    if kind == "bernoulli":
        return Bernoulli(float(d.get("theta", 0.5)))
    if kind == "switchback":
        return Switchback(int(d["interval_len"]), float(d.get("theta", 0.5)))
    raise ConfigurationError(f"unknown policy type {kind!r}")


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    seed: int
    policy: dict
    replication: int = 0
    blocks: np.ndarray | None = None
    times: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.actions)
        if len(self.states) != n or len(self.rewards) != n:
            raise ConfigurationError("states, actions and rewards must share one length")

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class TrajectoryBatch:
    """Replications stacked along axis 0; row i equals ``simulate(..., replication=start + i)``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    seed: int
    policy: dict
    start: int = 0
    blocks: np.ndarray | None = None

    def __len__(self) -> int:
        return self.actions.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(
            self.states[i],
            self.actions[i],
            self.rewards[i],
            self.seed,
            self.policy,
            self.start + i,
            None if self.blocks is None else self.blocks[i],
        )


def _draw_noise(env: NonstationaryMdp, policy: Policy, seed: int, rep: int, schedule=None):
    T = env.horizon
    if schedule is not None:
        z = np.asarray(schedule, dtype=np.int64)
        if z.shape != (T,):
            raise ConfigurationError(f"schedule length {z.shape} does not match horizon {T}")
        blocks = None
    else:
        z, blocks = policy.draw(T, rngmod.stream(seed, rep, rngmod.POLICY))
    u = rngmod.stream(seed, rep, rngmod.TRANSITION).random(T)
    kind = env.reward_noise.kind
    g = rngmod.stream(seed, rep, rngmod.REWARD)
    if kind == "gaussian":
        eps = g.standard_normal(T)
    elif kind in ("uniform", "bernoulli"):
        eps = g.random(T)
    else:
        eps = None
    return z, blocks, u, eps


def _rollout(env: NonstationaryMdp, z: np.ndarray, u: np.ndarray, eps) -> tuple[np.ndarray, np.ndarray]:
    R, T = z.shape
    K = env.kernels
    cum0 = np.cumsum(env.initial_dist)
    x = np.minimum((u[:, :1] >= cum0).sum(axis=-1), env.num_states - 1)
    X = np.empty((R, T), dtype=np.int64)
    for t in range(T):
        X[:, t] = x
        if t < T - 1:
            x = K.sample(t, z[:, t], x, u[:, t + 1])
    if env.reward_means.ndim == 2:
        mean = env.reward_means[X, z]
    else:
        mean = env.reward_means[np.arange(T)[None, :], X, z]
    kind, scale = env.reward_noise.kind, env.reward_noise.scale
    if kind == "gaussian":
        Y = mean + scale * eps
    elif kind == "uniform":
        Y = mean + scale * (2.0 * eps - 1.0)
    elif kind == "bernoulli":
        Y = (eps < mean).astype(float)
    else:
        Y = mean.astype(float, copy=True)
    return X, Y


def simulate(
    env: NonstationaryMdp, policy: Policy, seed: int, replication: int = 0, schedule=None
) -> Trajectory:
    """Simulate one trajectory; a pure function of (env, policy, seed, replication).

    ``schedule`` optionally fixes the assignment sequence (length T).
    """
    z, blocks, u, eps = _draw_noise(env, policy, seed, replication, schedule)
    X, Y = _rollout(env, z[None], u[None], None if eps is None else eps[None])
    return Trajectory(X[0], z, Y[0], seed, policy.describe(), replication, blocks)


def simulate_many(
    env: NonstationaryMdp, policy: Policy, seed: int, reps: int, start: int = 0
) -> TrajectoryBatch:
    """Vectorised replications ``start .. start + reps - 1``; bit-identical to ``simulate``."""
    draws = [_draw_noise(env, policy, seed, start + i) for i in range(reps)]
    z = np.stack([d[0] for d in draws])
    u = np.stack([d[2] for d in draws])
    eps = None if draws[0][3] is None else np.stack([d[3] for d in draws])
    blocks = None if draws[0][1] is None else np.stack([d[1] for d in draws])
    X, Y = _rollout(env, z, u, eps)
    return TrajectoryBatch(X, z, Y, seed, policy.describe(), start, blocks)


def paired_arms(env: NonstationaryMdp, seed: int, reps: int, start: int = 0):
    """AlwaysTreat and AlwaysControl batches sharing transition and reward streams."""
    return (
        simulate_many(env, AlwaysTreat(), seed, reps, start),
        simulate_many(env, AlwaysControl(), seed, reps, start),
    )
