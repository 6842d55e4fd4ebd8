"""Keyed random streams.

Every stochastic draw in the package comes from a generator keyed by the
user seed, a stream tag and integer indices (member, lead, ...), so draws do
not depend on evaluation order or on how work is split across processes.
"""

import numpy as np

NOISE = 1
PERTURBATION = 2
RANK_TIES = 3
SYNTHETIC = 4
SEARCH = 5


def generator(seed: int, stream: int, *indices: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(stream, *map(int, indices)))
    return np.random.Generator(np.random.PCG64(ss))
