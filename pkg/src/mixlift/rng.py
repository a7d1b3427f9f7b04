"""Seed handling: one deterministic stream per (seed, stream-id) tuple.

Every generator in the package draws from streams created here, so a run is
reproducible from its integer seed and parallel draws never share a stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "derive_seed"]


def stream(seed: int, *ids) -> np.random.Generator:
    """Return the generator for stream ``ids`` under ``seed``.

    Stream ids may be ints or strings; strings are hashed to stable integers.
    """
    key = tuple(_to_int(x) for x in ids)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


def derive_seed(base_seed: int, *parts) -> int:
    """Collapse (base_seed, parts...) into a stable 63-bit seed.

    Used by the experiment harness so per-cell seeds survive process
    boundaries and do not depend on Python's randomized ``hash``.
    """
    blob = repr((int(base_seed),) + tuple(parts)).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") >> 1


def _to_int(x) -> int:
    if isinstance(x, (int, np.integer)):
        return int(x) & 0xFFFFFFFF
    return int.from_bytes(hashlib.sha256(str(x).encode()).digest()[:4], "big")
