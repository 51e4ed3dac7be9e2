"""Derived random streams.

Every stochastic step pulls its generator from ``(seed, *key)`` so results do
not depend on evaluation order or on how work is split across workers.
"""

import numpy as np


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *key))


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed for the child stream ``(seed, *key)``."""
    state = seed_sequence(seed, *key).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def draw_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))
