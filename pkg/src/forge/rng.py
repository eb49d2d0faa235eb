"""Stateless random streams keyed by (seed, index, tag).

Every consumer derives its own Philox generator from the key, so a value
depends only on the key and never on call order or worker assignment.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_id(tag: str) -> int:
    """Platform-independent 64-bit id for a stream tag."""
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def stream(seed: int, *keys: int | str) -> np.random.Generator:
    words = [int(seed) & _MASK64]
    for k in keys:
        words.append(tag_id(k) if isinstance(k, str) else int(k) & _MASK64)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def derive_seed(seed: int, *keys: int | str) -> int:
    """A fresh 63-bit seed from a keyed stream, for handing to another stage."""
    return int(stream(seed, *keys).integers(0, 2**63 - 1))
