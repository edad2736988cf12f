"""Deterministic random streams.

Every stream is a numpy ``Generator`` backed by PCG64 and seeded through a
``SeedSequence``. Independent lanes (one per training sample during
screening) are derived from ``(master seed, *spawn key)`` so results do not
depend on evaluation order.
"""
import numpy as np

Rng = np.random.Generator


def make_rng(seed: int, *key: int) -> Rng:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def lane_rng(seed: int, epoch: int, index: int) -> Rng:
    """Stream for one sample's screening trials at a given refresh epoch."""
    return make_rng(seed, 1, epoch, index)
