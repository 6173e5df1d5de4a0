"""Named random substreams derived from one global seed."""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for consumer ``name``; adding a consumer never shifts another."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])
