"""Seed derivation and named random streams.

Every random quantity in a run comes from a numpy ``Generator`` backed by
PCG64. Streams are keyed by a label so that, e.g., the third switch series
of a kernel never shares draws with the initial company placement.

Derivation: the 64-bit seed of a stream is the first 8 bytes (little-endian)
of ``blake2b(f"{seed}/{label}", digest_size=8)``. The same rule, with label
``f"cell{cell_index}/run{run_index}"``, derives per-run seeds in ensembles.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def hash_seed(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{int(seed)}/{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent PCG64 generator for ``(seed, label)``."""
    return np.random.Generator(np.random.PCG64(hash_seed(seed, label)))


def derive_seed(base_seed: int, cell_index: int, run_index: int) -> int:
    return hash_seed(base_seed, f"cell{int(cell_index)}/run{int(run_index)}")
