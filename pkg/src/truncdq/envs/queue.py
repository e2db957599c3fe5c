"""Uniformized birth-death queue with day-of-week / time-of-day arrivals.

Arrival rate in week w, day d, half-hour bin b and queue length k:

    lambda = (8 - 4 p) / (1 + k / 5) * a_w * b_{d, b}

with p = treatment_p under treatment and control_p under control. Rates are
per hour; a step of ``step_minutes`` turns them into per-step probabilities.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from truncdq.envs.rates import BINS, DAYS, default_rate_table, load_rate_table
from truncdq.mdp import BirthDeathKernels, ConfigurationError, NonstationaryMdp, RewardNoise

MINUTES_PER_WEEK = DAYS * 24 * 60


@dataclass(frozen=True)
class QueueConfig:
    max_queue_len: int = 40
    service_rate: float = 20.0  # per hour
    weekly_multipliers: tuple = (0.9, 1.0, 1.1, 1.2)
    treatment_p: float = 1.75
    control_p: float = 0.25
    step_minutes: float = 1.0
    weeks: int = 4
    rate_table_path: str | None = None
    rate_scale: float = 1.0
    # "neg_queue": Y_t = -X_t; "arrival_joined": Y_t ~ Bernoulli(arrival probability)
    reward: str = "neg_queue"
    rate_table: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def horizon(self) -> int:
        steps = self.weeks * MINUTES_PER_WEEK / self.step_minutes
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError("step_minutes must divide a week evenly")
        return int(round(steps))

    def table(self) -> np.ndarray:
        if self.rate_table is not None:
            t = np.asarray(self.rate_table, dtype=float)
            if t.shape != (DAYS, BINS):
                raise ConfigurationError("rate table must be 7 x 48")
        elif self.rate_table_path:
            t = load_rate_table(self.rate_table_path)
        else:
            t = default_rate_table()
        return t * self.rate_scale

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("rate_table")
        d["weekly_multipliers"] = list(self.weekly_multipliers)
        return d


def arrival_multiplier(p: float) -> float:
    return 8.0 - 4.0 * p


def arrival_rates(config: QueueConfig, p: float) -> np.ndarray:
    """Per-hour arrival rates lambda for every step and queue length, shape (T, K+1)."""
    if config.weeks < 1 or config.weeks > len(config.weekly_multipliers):
        raise ConfigurationError("need one weekly multiplier per simulated week")
    T = config.horizon
    minutes = np.arange(T) * config.step_minutes
    week = (minutes // MINUTES_PER_WEEK).astype(int)
    day = ((minutes // 1440) % DAYS).astype(int)
    half_hour = ((minutes % 1440) // 30).astype(int)
    base = np.asarray(config.weekly_multipliers, dtype=float)[week] * config.table()[day, half_hour]
    k = np.arange(config.max_queue_len + 1)
    return arrival_multiplier(p) * base[:, None] / (1.0 + k[None, :] / 5.0)


def build_queue(config: QueueConfig) -> NonstationaryMdp:
    if config.max_queue_len < 1:
        raise ConfigurationError("max_queue_len must be >= 1")
    if config.service_rate < 0 or config.step_minutes <= 0:
        raise ConfigurationError("service_rate must be >= 0 and step_minutes > 0")
    scale = config.step_minutes / 60.0
    K = config.max_queue_len
    up = np.stack(
        [arrival_rates(config, config.control_p), arrival_rates(config, config.treatment_p)], axis=1
    ) * scale
    up[..., K] = 0.0
    down = np.full_like(up, config.service_rate * scale)
    down[..., 0] = 0.0
    total = up + down
    if (total > 1.0).any():
        t, z, k = np.argwhere(total > 1.0)[0]
        raise ConfigurationError(
            f"uniformization error at t={t + 1}, k={k} (arm {z}): "
            f"per-step probability {total[t, z, k]:.4f} > 1"
        )
    if (up < 0).any():
        raise ConfigurationError("arrival rates must be >= 0")
    kernels = BirthDeathKernels(up, down)
    rho = np.zeros(K + 1)
    rho[0] = 1.0
    if config.reward == "neg_queue":
        rewards = -np.repeat(np.arange(K + 1, dtype=float)[:, None], 2, axis=1)
        noise = RewardNoise()
    elif config.reward == "arrival_joined":
        rewards = np.moveaxis(up, 1, 2).copy()  # (T, S, 2)
        noise = RewardNoise("bernoulli")
    else:
        raise ConfigurationError(f"unknown queue reward {config.reward!r}")
    return NonstationaryMdp(kernels, rewards, rho, noise, name="queue")
