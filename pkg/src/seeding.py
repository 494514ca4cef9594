"""
Seed handling shared by every random draw
"""

import numpy as np

SEED_MODULUS = 2**63


def normalize_seed(seed: int) -> int:
    """Map any integer seed, negative ones included, onto [0, 2**63)."""
    return int(seed) % SEED_MODULUS


def seeded_rng(seed: int) -> np.random.Generator:
    # Non-negative seeds below 2**63 give the same stream as default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(normalize_seed(seed)))
