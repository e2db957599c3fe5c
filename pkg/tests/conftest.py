import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from truncdq.envs.random_env import random_finite

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def tiny_env():
    return random_finite(3, 5, seed=11)


def enumerate_paths(env, thetas):
    """Yield (probability, states, actions) for every path; thetas[t] is P(Z_t = 1)."""
    S, T = env.num_states, env.horizon
    for xs in itertools.product(range(S), repeat=T):
        for zs in itertools.product((0, 1), repeat=T):
            p = env.initial_dist[xs[0]]
            for t in range(T):
                p *= thetas[t] if zs[t] == 1 else 1.0 - thetas[t]
                if t < T - 1:
                    p *= env.kernels.matrix(t, zs[t])[xs[t], xs[t + 1]]
                if p == 0.0:
                    break
            if p > 0.0:
                yield p, xs, zs


def path_value(env, thetas):
    """Horizon-averaged expected reward by brute-force path enumeration."""
    total = 0.0
    for p, xs, zs in enumerate_paths(env, thetas):
        total += p * np.mean([env.rewards_at(t)[xs[t], zs[t]] for t in range(env.horizon)])
    return total


def matrix_truncated_value(env, theta, k):
    """J_k(theta) from explicit matrix products of the mixed kernels."""
    T = env.horizon

    def P(t, th):
        return th * env.kernels.matrix(t, 1) + (1 - th) * env.kernels.matrix(t, 0)

    vals = []
    for t in range(T):
        start = max(t - k, 0)
        law = env.initial_dist.copy()
        for s in range(start):
            law = law @ P(s, 0.5)
        for s in range(start, t):
            law = law @ P(s, theta)
        r = env.rewards_at(t)
        vals.append(law @ (theta * r[:, 1] + (1 - theta) * r[:, 0]))
    return float(np.mean(vals))
