"""Sub-seed derivation.

Every random draw in the engine flows from a single 64-bit root seed. A
purpose-tagged sub-seed is `root XOR blake2b(tag)`, so disjoint purposes get
independent streams and any piece of the pipeline can be regenerated in
isolation (workers never share generator state).
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, *tags: object) -> int:
    """64-bit sub-seed for `tags`, stable across runs and platforms."""
    text = "/".join(str(t) for t in tags)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return (int(root) ^ int.from_bytes(digest, "little")) & _MASK64


def rng_for(root: int, *tags: object) -> np.random.Generator:
    """Generator seeded with `derive_seed(root, *tags)`."""
    return np.random.default_rng(derive_seed(root, *tags))
