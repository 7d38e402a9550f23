"""Deterministic, splittable random streams.

Every stochastic routine takes an integer seed. Sub-streams are addressed by a
tuple of small integers (or strings, hashed stably) so that e.g. the noise of
asset ``i`` does not depend on how many other assets are simulated.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for ``seed`` and sub-stream ``path``."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed, *path):
    """Derive a new 63-bit integer seed, for handing to another seeded routine."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
