"""Counter-based random streams.

Every stochastic routine takes (seed, *key) and derives an independent
Philox stream from it, so replicate r of experiment i is bitwise
reproducible regardless of execution order or worker count.
"""

from __future__ import annotations

import numpy as np


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) coordinate."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
