"""Truncated difference-in-Q's estimation of global treatment effects in nonstationary MDPs."""

from truncdq.mdp import (
    AlwaysControl,
    AlwaysTreat,
    Bernoulli,
    ConfigurationError,
    DenseKernels,
    EstimationError,
    NonstationaryMdp,
    RewardNoise,
    Switchback,
    Trajectory,
    dobrushin_coefficient,
    kernel_deviation,
    simulate,
    simulate_many,
)

__version__ = "0.1.0"
