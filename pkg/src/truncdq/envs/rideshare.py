"""Event-indexed ride-sharing pricing simulator on a square grid.

One step per rider arrival. The rider sees a price proportional to trip
duration and an ETA from the driver who can reach the pickup earliest, and
accepts with logistic probability. Accepted trips pay the price and keep the
driver busy through dropoff.

Travel time between cells is the Manhattan distance divided by ``speed``
(cells per minute), rounded up to whole minutes. Prices and ETAs enter the
choice model in seconds.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from truncdq import rng as rngmod
from truncdq.mdp import AlwaysControl, AlwaysTreat, Bernoulli, ConfigurationError, Switchback, Trajectory


def default_rate_profile() -> tuple:
    """Hourly rider arrival rates (per minute), bimodal commuter day."""
    hours = np.arange(24) + 0.5
    rate = 6.0 + 15.0 * np.exp(-(((hours - 8.5) / 2.0) ** 2)) + 18.0 * np.exp(-(((hours - 18.5) / 2.5) ** 2))
    return tuple(np.round(rate, 3).tolist())


@dataclass(frozen=True)
class RideshareConfig:
    grid_size: int = 20
    num_drivers: int = 100
    rate_profile: tuple = default_rate_profile()  # riders per minute, one value per hour, repeats daily
    w_price: float = -0.3
    w_eta: float = -0.005
    w_0: float = 4.0
    price_rate_control: float = 0.01  # per second of trip time
    price_rate_treatment: float = 0.02
    speed: float = 1.0  # cells per minute
    num_arrivals: int = 50_000
    switch_minutes: float = 10.0  # switchback block length in wall-clock minutes

    def validate(self) -> None:
        if self.num_drivers < 1:
            raise ConfigurationError("ride-share needs at least one driver")
        if self.grid_size < 1 or self.speed <= 0 or self.num_arrivals < 1:
            raise ConfigurationError("grid_size, speed and num_arrivals must be positive")
        if len(self.rate_profile) == 0 or min(self.rate_profile) < 0 or max(self.rate_profile) <= 0:
            raise ConfigurationError("rate_profile needs nonnegative rates with a positive maximum")
        if self.switch_minutes <= 0:
            raise ConfigurationError("switch_minutes must be > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rate_profile"] = list(self.rate_profile)
        return d


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def travel_minutes(a: np.ndarray, b: np.ndarray, speed: float) -> np.ndarray:
    """Whole-minute travel time between cells; symmetric with zero diagonal."""
    return np.ceil(np.abs(np.asarray(a) - np.asarray(b)).sum(axis=-1) / speed)


class RideshareSim:
    def __init__(self, config: RideshareConfig):
        config.validate()
        self.config = config

    def arrival_rate(self, minutes: np.ndarray) -> np.ndarray:
        prof = np.asarray(self.config.rate_profile, dtype=float)
        hour = (np.asarray(minutes) // (1440.0 / len(prof))).astype(int) % len(prof)
        return prof[hour]

    def draw_arrivals(self, gen: np.random.Generator):
        """Arrival times (minutes) by thinning a homogeneous Poisson process; pickups and dropoffs uniform."""
        c = self.config
        lam_max = max(c.rate_profile)
        times = []
        need, now = c.num_arrivals, 0.0
        while need > 0:
            m = int(need * lam_max / max(np.mean(c.rate_profile), 1e-9) * 1.2) + 64
            cand = now + np.cumsum(gen.exponential(1.0 / lam_max, size=m))
            keep = gen.random(m) * lam_max < self.arrival_rate(cand)
            acc = cand[keep][:need]
            times.append(acc)
            need -= len(acc)
            now = cand[-1]
        t = np.concatenate(times)
        cells = gen.integers(0, c.grid_size, size=(c.num_arrivals, 2, 2))
        return t, cells[:, 0], cells[:, 1]

    def assignments(self, policy, times: np.ndarray, gen: np.random.Generator):
        n = len(times)
        blocks = None
        if isinstance(policy, AlwaysTreat):
            z = np.ones(n, dtype=np.int64)
        elif isinstance(policy, AlwaysControl):
            z = np.zeros(n, dtype=np.int64)
        elif isinstance(policy, Bernoulli):
            z = (gen.random(n) < policy.theta).astype(np.int64)
        elif isinstance(policy, Switchback):
            # interval_len is in minutes on event-indexed time
            blocks = (times // policy.interval_len).astype(np.int64)
            z = policy.block_draws(int(blocks[-1]) + 1, gen)[blocks]
        else:
            raise ConfigurationError(f"unsupported policy {policy!r}")
        if blocks is None:
            blocks = (times // self.config.switch_minutes).astype(np.int64)
        return z, blocks

    def simulate(self, policy, seed: int, replication: int = 0) -> Trajectory:
        """Event loop. Arrivals, locations and acceptance draws come from streams shared across policies."""
        c = self.config
        times, pickup, dropoff = self.draw_arrivals(rngmod.stream(seed, replication, rngmod.TRANSITION))
        accept_u = rngmod.stream(seed, replication, rngmod.REWARD).random(c.num_arrivals)
        z, blocks = self.assignments(policy, times, rngmod.stream(seed, replication, rngmod.POLICY))
        start = rngmod.stream(seed, replication, rngmod.ENV).integers(0, c.grid_size, size=(c.num_drivers, 2))
        available, rewards, _ = self.run_events(times, pickup, dropoff, accept_u, z, start)
        return Trajectory(
            available, z, rewards, seed, policy.describe(), replication, blocks, times
        )

    def run_events(self, times, pickup, dropoff, accept_u, z, start):
        """Process riders in order; returns (available counts, rewards, dispatched driver or -1)."""
        c = self.config
        n = len(times)
        pickup, dropoff = np.asarray(pickup), np.asarray(dropoff)
        pos = np.asarray(start, dtype=float).copy()
        if len(pos) != c.num_drivers:
            raise ConfigurationError("one start cell per driver required")
        free_at = np.zeros(c.num_drivers)
        trip = travel_minutes(pickup, dropoff, c.speed)
        price_rate = np.where(np.asarray(z) == 1, c.price_rate_treatment, c.price_rate_control)
        price = price_rate * trip * 60.0
        rewards = np.zeros(n)
        available = np.empty(n, dtype=np.int64)
        dispatched = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            now = times[i]
            ready = np.maximum(free_at, now)
            arrive = ready + np.ceil(np.abs(pos - pickup[i]).sum(axis=1) / c.speed)
            d = int(np.argmin(arrive))  # ties go to the lowest driver index
            available[i] = int((free_at <= now).sum())
            eta = (arrive[d] - now) * 60.0
            p = sigmoid(c.w_price * price[i] + c.w_eta * eta + c.w_0)
            if accept_u[i] < p:
                rewards[i] = price[i]
                free_at[d] = arrive[d] + trip[i]
                pos[d] = dropoff[i]
                dispatched[i] = d
        return available, rewards, dispatched


def block_level(traj: Trajectory, bins: int = 10) -> Trajectory:
    """Collapse an event trajectory to switchback blocks.

    State is the block's average available-driver count, binned into deciles
    of its distribution over blocks; reward is the block's mean reward.
    """
    if traj.blocks is None:
        raise ConfigurationError("trajectory has no block ids")
    b = np.asarray(traj.blocks)
    starts = np.flatnonzero(np.r_[True, b[1:] != b[:-1]])
    counts = np.diff(np.r_[starts, len(b)])
    avail = np.add.reduceat(np.asarray(traj.states, dtype=float), starts) / counts
    reward = np.add.reduceat(np.asarray(traj.rewards, dtype=float), starts) / counts
    edges = np.quantile(avail, np.linspace(0, 1, bins + 1)[1:-1])
    states = np.searchsorted(edges, avail, side="right")
    return Trajectory(
        states, np.asarray(traj.actions)[starts], reward, traj.seed, traj.policy, traj.replication
    )
