"""Two-state MDP with mean-reverting autoregressive control kernels."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from truncdq import rng as rngmod
from truncdq.mdp import ConfigurationError, DenseKernels, NonstationaryMdp, RewardNoise


@dataclass(frozen=True)
class TwoStateConfig:
    mean_reversion: float = 0.5
    target_mixing: float = 0.5
    kernel_shift: float = 0.1
    # row x moves kernel_shift * shift_by_state[x] of mass; (1, 1) shifts every row alike
    shift_by_state: tuple[float, float] = (1.0, 1.0)
    noise_std: float = 0.1
    reward_std: float = 0.1
    horizon: int = 5000
    # r(x, 0) ~ U(reward_low[x], reward_high[x]); r(x, 1) = r(x, 0) + U(0, treatment_lift)
    reward_low: tuple[float, float] = (0.0, 6.0)
    reward_high: tuple[float, float] = (2.0, 10.0)
    treatment_lift: float = 2.0
    # fixed ((r(0,0), r(0,1)), (r(1,0), r(1,1))) instead of drawing rewards
    reward_means: tuple | None = None
    # orientation of (mu_0, mu_1): "random", "persistent" or "alternating"
    orientation: str = "random"
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.mean_reversion <= 1.0:
            raise ConfigurationError("mean_reversion must lie in [0, 1]")
        if not 0.0 <= self.target_mixing < 1.0:
            raise ConfigurationError("target_mixing gamma must lie in [0, 1)")
        if not 0.0 <= self.kernel_shift <= 1.0:
            raise ConfigurationError("kernel_shift delta must lie in [0, 1]")
        if len(self.shift_by_state) != 2 or not all(0.0 <= w <= 1.0 for w in self.shift_by_state):
            raise ConfigurationError("shift_by_state needs two weights in [0, 1]")
        if self.noise_std < 0 or self.reward_std < 0:
            raise ConfigurationError("noise and reward std must be >= 0")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if len(self.reward_low) != 2 or len(self.reward_high) != 2:
            raise ConfigurationError("reward_low and reward_high need one entry per state")
        if any(h < l for l, h in zip(self.reward_low, self.reward_high)) or self.treatment_lift < 0:
            raise ConfigurationError("invalid reward range")
        if self.reward_means is not None and np.shape(self.reward_means) != (2, 2):
            raise ConfigurationError("reward_means must be 2 x 2 (state, arm)")
        if self.orientation not in ("random", "persistent", "alternating"):
            raise ConfigurationError(f"unknown orientation {self.orientation!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def mixing_targets(gamma: float, persistent: bool) -> np.ndarray:
    """Long-run next-state laws (mu_0, mu_1) with TV(mu_0, mu_1) = gamma."""
    hi, lo = 0.5 * (1 + gamma), 0.5 * (1 - gamma)
    if persistent:
        return np.array([[hi, lo], [lo, hi]])
    return np.array([[lo, hi], [hi, lo]])


def _normalise(rows: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    rows = np.clip(rows, 0.0, None)
    tot = rows.sum(axis=-1, keepdims=True)
    out = np.where(tot > 0, rows / np.where(tot > 0, tot, 1.0), fallback)
    # exact row sums: put the rounding residue on the last entry
    out[..., -1] = 1.0 - out[..., :-1].sum(axis=-1)
    return out


def shift_toward_state1(P0: np.ndarray, delta: float, by_state=(1.0, 1.0)) -> np.ndarray:
    """Move delta (times the row's weight) of mass from state 0 to state 1, clip at 0, renormalise."""
    step = delta * np.asarray(by_state, dtype=float)[:, None]
    shifted = P0 + step * np.array([-1.0, 1.0])
    return _normalise(shifted, P0)


def build_two_state(config: TwoStateConfig) -> NonstationaryMdp:
    """Kernels, reward means and initial law from the config's ``env`` stream."""
    config.validate()
    gen = rngmod.stream(config.seed, 0, rngmod.ENV)
    T, a = config.horizon, config.mean_reversion
    if config.orientation == "random":
        persistent = bool(gen.random() < 0.5)
    else:
        persistent = config.orientation == "persistent"
    mu = mixing_targets(config.target_mixing, persistent)
    noise = gen.standard_normal((T, 2, 2)) * config.noise_std
    P = np.empty((T, 2, 2, 2))
    P[0, 0] = mu
    for t in range(1, T):
        P[t, 0] = _normalise(a * P[t - 1, 0] + (1 - a) * mu + noise[t], P[t - 1, 0])
    P[:, 1] = shift_toward_state1(P[:, 0], config.kernel_shift, config.shift_by_state)
    r0 = gen.uniform(config.reward_low, config.reward_high)
    r1 = r0 + gen.uniform(0.0, config.treatment_lift, size=2)
    rewards = np.stack([r0, r1], axis=1)
    if config.reward_means is not None:
        rewards = np.array(config.reward_means, dtype=float)
    noise_model = RewardNoise("gaussian", config.reward_std) if config.reward_std > 0 else RewardNoise()
    return NonstationaryMdp(
        DenseKernels(P), rewards, np.full(2, 0.5), noise_model, name="two_state"
    )
