"""Seed derivation helpers.

All randomness in the package flows through numpy's PCG64 generator seeded
from an explicit 64-bit seed. Sub-streams are derived with SeedSequence
spawn keys so results depend only on (seed, key), never on call order.
"""

from __future__ import annotations

import numpy as np

# Stable tags for spawn keys. Each (seed, tag, *parts) pair names one stream.
_TAGS = {
    "split": 1,
    "train": 2,
    "synth": 3,
    "audit": 4,
}


def rng_for(seed: int, tag: str, *parts: int) -> np.random.Generator:
    """Return a PCG64 generator for the stream named by (seed, tag, parts)."""
    if tag not in _TAGS:
        raise ValueError(f"unknown rng tag: {tag!r}")
    key = (_TAGS[tag],) + tuple(int(p) for p in parts)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))
