"""Keyed random streams.

Every random draw in the package comes from a generator keyed by
``(master_seed, replication, tag)``. Changing the assignment policy therefore
never perturbs the transition or reward noise of a replication, which is what
makes common-random-number (paired) ground truth possible.
"""

from __future__ import annotations

import numpy as np

POLICY = 0
TRANSITION = 1
REWARD = 2
ENV = 3
# Reserved for ground-truth runs so they never collide with experiment streams.
TRUTH = 1_000

_TAGS = {"policy": POLICY, "transition": TRANSITION, "reward": REWARD, "env": ENV}

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, replication: int, tag: int | str, *extra: int) -> np.random.Generator:
    """Return an independent Philox generator for one (seed, replication, tag) key."""
    if isinstance(tag, str):
        tag = _TAGS[tag]
    seq = np.random.SeedSequence(
        entropy=int(master_seed) & _MASK64,
        spawn_key=(int(replication), int(tag), *(int(e) for e in extra)),
    )
    return np.random.Generator(np.random.Philox(seq))
