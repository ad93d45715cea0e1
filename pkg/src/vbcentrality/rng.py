"""Named random streams derived from a single root seed.

Every consumer asks for a stream by name, e.g. ``stream(seed, "obs", "er",
3)``.  The names are hashed (SHA-256, stable across processes and Python
versions) into the entropy of a :class:`numpy.random.SeedSequence` together
with the root seed, so adding a new consumer never shifts the draws of an
existing one.
"""

import hashlib

import numpy as np


def _name_words(names):
    words = []
    for name in names:
        digest = hashlib.sha256(repr(name).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:8], "little"))
    return words


def seed_sequence(root, *names):
    return np.random.SeedSequence([int(root)] + _name_words(names))


def stream(root, *names):
    """Return a ``numpy.random.Generator`` for the stream ``names`` under ``root``."""
    return np.random.default_rng(seed_sequence(root, *names))


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
