"""Small random finite environments for oracle checks."""

from __future__ import annotations

import numpy as np

from truncdq import rng as rngmod
from truncdq.mdp import DenseKernels, NonstationaryMdp, RewardNoise


def random_finite(
    num_states: int,
    horizon: int,
    seed: int,
    concentration: float = 1.0,
    reward_noise: str = "none",
    noise_scale: float = 0.0,
) -> NonstationaryMdp:
    """Dirichlet kernel rows, standard-normal reward means, Dirichlet initial law."""
    gen = rngmod.stream(seed, 0, rngmod.ENV)
    S, T = num_states, horizon
    P = gen.dirichlet(np.full(S, concentration), size=(T, 2, S))
    P[..., -1] = 1.0 - P[..., :-1].sum(axis=-1)
    P = np.clip(P, 0.0, None)
    rho = gen.dirichlet(np.ones(S))
    rho[-1] = 1.0 - rho[:-1].sum()
    r = gen.standard_normal((S, 2))
    return NonstationaryMdp(
        DenseKernels(P), r, np.clip(rho, 0.0, None), RewardNoise(reward_noise, noise_scale), name="random"
    )


def iid_env(num_states: int, horizon: int, seed: int, effect: float = 1.0) -> NonstationaryMdp:
    """Next state drawn from one fixed law regardless of (x, z); constant direct effect."""
    gen = rngmod.stream(seed, 0, rngmod.ENV)
    S, T = num_states, horizon
    row = gen.dirichlet(np.ones(S))
    row[-1] = 1.0 - row[:-1].sum()
    P = np.broadcast_to(row, (T, 2, S, S)).copy()
    base = gen.standard_normal(S)
    r = np.stack([base, base + effect], axis=1)
    return NonstationaryMdp(DenseKernels(P), r, row.copy(), RewardNoise("uniform", 0.5), name="iid")
