"""Deterministic randomness: one global seed fans out into named sub-streams.

Every stochastic choice in the pipeline draws from a generator keyed by
(seed, *names) through a stable 64-bit hash, so results are reproducible
across machines and independent of input-row order.
"""

import hashlib

import numpy as np


def stable_hash64(*parts) -> int:
    """Stable 64-bit hash of a tuple of strings/ints/floats.

    Unlike Python's built-in hash, the value does not vary across processes
    or platforms.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, float):
            token = repr(part)
        else:
            token = str(part)
        h.update(token.encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def unit_interval(*parts) -> float:
    """Map a named stream to a float in [0, 1)."""
    return stable_hash64(*parts) / 2.0**64


def rng_for(*parts) -> np.random.Generator:
    """A numpy Generator seeded from a named sub-stream."""
    return np.random.Generator(np.random.PCG64(stable_hash64(*parts)))
