"""Named random streams derived from one 64-bit seed.

Every stochastic component asks for its own stream by name, so adding a new
consumer never shifts the draws seen by existing ones.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _name_key(name: str) -> tuple[int, ...]:
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for ``name`` under ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=_name_key(name))
    return np.random.Generator(np.random.PCG64(seq))
