"""Deterministic seed derivation shared by every randomized component.

All randomness in the simulator flows through generators keyed by a scope
tuple (ints and strings).  The derivation is a plain SHA-256 hash, so the
same scope yields the same stream on every platform and under any thread
scheduling; this is what makes concurrent and sequential client training
bit-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*scope: int | str) -> int:
    """Collapse a scope tuple into a stable 64-bit integer seed."""
    h = hashlib.sha256()
    for part in scope:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(*scope: int | str) -> np.random.Generator:
    """PCG64 generator keyed by a scope tuple, independent of call order."""
    h = hashlib.sha256()
    for part in scope:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    entropy = int.from_bytes(h.digest()[:16], "little")
    return np.random.default_rng(np.random.SeedSequence(entropy))
