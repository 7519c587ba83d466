"""Named random substreams so each source of randomness can vary independently."""

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for stream `name`, derived from `seed` but independent of other streams."""
    tag = int.from_bytes(hashlib.blake2s(name.encode(), digest_size=8).digest(), "big")
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
