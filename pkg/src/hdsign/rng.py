"""Keyed random streams.

Every stream is a counter-based Philox generator whose key is derived from a
master seed plus a tuple of non-negative integer keys (cell, replication,
purpose, ...).  Two different key tuples never share a stream, so adding a
method to an experiment leaves the draws of every other method unchanged.
"""

import zlib

import numpy as np

# purpose codes used inside one replication
DATA = 0
METHOD_CODES = {"WPL": 1, "ZGCZ": 2, "TR": 3, "TN": 4}


def make_stream(seed, *keys):
    """Return a ``numpy.random.Generator`` keyed by ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def stream_id(seed, *keys):
    """Identifier of the stream ``make_stream(seed, *keys)`` would return."""
    return (int(seed),) + tuple(int(k) for k in keys)


def text_key(text):
    """Stable 32-bit integer key for a string label."""
    return zlib.crc32(text.encode("utf-8"))


def as_generator(random_state):
    """Coerce ``None``, an int seed or a Generator into a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def entropy_seed():
    """A fresh 63-bit seed from OS entropy."""
    return int(np.random.SeedSequence().entropy % (2**63))
