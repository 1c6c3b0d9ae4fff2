"""Per-trajectory random streams.

Trajectory ``i`` of an ensemble seeded with ``master`` uses the integer seed
``splitmix64(master + i * GOLDEN_GAMMA)`` to key a Philox counter-based
generator, so any single trajectory can be replayed in isolation.
"""
import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + GOLDEN_GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def trajectory_seed(master_seed: int, index: int) -> int:
    return splitmix64((int(master_seed) + int(index) * GOLDEN_GAMMA) & _MASK)


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed) & _MASK))
