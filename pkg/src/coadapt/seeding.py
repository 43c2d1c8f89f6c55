"""Deterministic seed derivation.

Everything random in the package flows through here so that a single world
seed reproduces identical runs across processes and platforms (independent
of PYTHONHASHSEED).
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_hash(*parts: object, bits: int = 64) -> int:
    """Hash a tuple of primitives to a fixed-width unsigned integer.

    Uses blake2b over a canonical byte encoding, so the result is stable
    across interpreter runs.
    """
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little") % (1 << bits)


def child_rng(seed: int, *tags: object) -> np.random.Generator:
    """Independent generator for a named stream under a world seed."""
    return np.random.Generator(np.random.PCG64(stable_hash(seed, *tags, bits=128)))
