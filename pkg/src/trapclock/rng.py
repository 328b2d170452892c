"""Seed derivation for reproducible, independent random streams.

Every random draw in the package comes from a ``numpy.random.Generator``
built from ``SeedSequence(master, spawn_key=(stream, replica))``. Two runs
with the same master seed therefore consume bit-identical streams, and
streams with different ``(stream, replica)`` keys are statistically
independent regardless of the order in which they are created.
"""
from __future__ import annotations

import numpy as np

# Stream identifiers. Changing these changes every seeded result.
LANDSCAPE = 0
DYNAMICS = 1
PRM = 2
DELAY = 3
LIMIT = 4
INITIAL = 5

STREAM_NAMES = {
    LANDSCAPE: "landscape",
    DYNAMICS: "dynamics",
    PRM: "prm",
    DELAY: "delay",
    LIMIT: "limit",
    INITIAL: "initial",
}

#: replicas are simulated in fixed-size batches, one derived stream per batch
BATCH_SIZE = 4096


def generator(seed, stream: int = 0, replica: int = 0) -> np.random.Generator:
    """Return the generator for ``(seed, stream, replica)``.

    ``seed`` may be an int, a ``SeedSequence`` (its spawn key is extended)
    or an existing ``Generator``, which is returned unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + (stream, replica)
        )
    else:
        if seed is None:
            raise ValueError("a seed is required for reproducible streams")
        ss = np.random.SeedSequence(int(seed), spawn_key=(stream, replica))
    return np.random.Generator(np.random.PCG64(ss))


def batch_sizes(total: int, batch: int = BATCH_SIZE) -> list[int]:
    """Split ``total`` replicas into fixed batches (last one may be short)."""
    if total < 0:
        raise ValueError("replica count must be nonnegative")
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    return sizes


def seed_record(seed, stream: int, replica: int = 0) -> dict:
    if isinstance(seed, np.random.Generator):
        return {"master": None, "stream": STREAM_NAMES.get(stream, stream), "replica": replica}
    if isinstance(seed, np.random.SeedSequence):
        return {
            "master": int(seed.entropy),
            "spawn_key": list(seed.spawn_key),
            "stream": STREAM_NAMES.get(stream, stream),
            "replica": replica,
        }
    return {"master": int(seed), "stream": STREAM_NAMES.get(stream, stream), "replica": replica}
