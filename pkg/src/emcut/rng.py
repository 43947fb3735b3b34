"""Deterministic random streams.

Every stream is a Philox (counter-based) generator keyed by the user seed
plus a tuple of identifiers, so results do not depend on the order in
which jobs run.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def make_rng(seed, *ids):
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(p) for p in ids]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
