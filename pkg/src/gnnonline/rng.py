"""Named, splittable random streams.

Streams are Philox counter-based generators keyed by a stable hash of
their lineage, so a child stream depends only on the base seed and the
names used to reach it, never on call order or process layout.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "make_rng"]


def _digest(parts) -> bytes:
    text = "\x1f".join(str(p) for p in parts)
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any sequence of printable parts."""
    return int.from_bytes(_digest(parts)[:8], "little") >> 1


def make_rng(seed: int, *names) -> np.random.Generator:
    """Generator for the stream ``names`` under ``seed``."""
    key = int.from_bytes(_digest((seed, *names)), "little")
    return np.random.Generator(np.random.Philox(key=key))
