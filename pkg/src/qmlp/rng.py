"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by a master seed plus
a tuple of labels, so independent jobs (structures, repeats, grid cells) get
reproducible, non-overlapping streams regardless of execution order.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def make_rng(seed: int, *labels) -> np.random.Generator:
    ss = np.random.SeedSequence([_key(seed), *(_key(p) for p in labels)])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *labels) -> int:
    """A 32-bit seed for a sub-job, stable across platforms."""
    ss = np.random.SeedSequence([_key(seed), *(_key(p) for p in labels)])
    return int(ss.generate_state(1)[0])
