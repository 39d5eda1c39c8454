"""Deterministic random-substream derivation.

One master seed drives a whole run. Every consumer (channel innovations for a
given slot, each agent's exploration noise, the layout generator) gets its own
independent substream derived from ``(master_seed, tag, *indices)``. Tags are
hashed with SHA-256 so the mapping is stable across platforms and Python
builds, unlike the built-in salted ``hash``.
"""

import hashlib

import numpy as np


def _entropy(master_seed: int, *tags) -> list[int]:
    h = hashlib.sha256()
    h.update(repr((int(master_seed),) + tuple(tags)).encode())
    digest = h.digest()
    # four 64-bit words of entropy
    return [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]


def substream(master_seed: int, *tags) -> np.random.Generator:
    """Independent generator for (master_seed, *tags).

    Same arguments always produce a generator in the same state, so any value
    drawn from it is a pure function of the master seed and the tags.
    """
    return np.random.default_rng(np.random.SeedSequence(_entropy(master_seed, *tags)))
