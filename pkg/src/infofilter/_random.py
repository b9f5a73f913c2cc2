"""Seed plumbing: every random stream is derived from a master seed plus a key."""

import numpy as np


def seed_sequence(seed, *key):
    """Child SeedSequence of ``seed`` addressed by the integer path ``key``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
        )
    if seed is None:
        raise ValueError("a seed is required; wall-clock seeding is not supported")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.default_rng(rng)
    if rng is None:
        raise ValueError("a seed or Generator is required")
    return np.random.default_rng(int(rng))


# Stable integer tags for the named streams used across modules.
STREAM_EVAL = 1
STREAM_TUNE = 2
STREAM_BOUND = 3
STREAM_HINDSIGHT = 4
STREAM_HORIZON = 5
