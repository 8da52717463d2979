"""Deterministic derivation of child seeds from a base seed and integer keys."""

import numpy as np


def derive_seed(*keys):
    """64-bit seed that depends only on ``keys`` (non-negative integers)."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)
    return int(state[0])


def child_rng(*keys):
    return np.random.default_rng(derive_seed(*keys))
