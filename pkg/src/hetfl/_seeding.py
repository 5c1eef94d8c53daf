"""Named, order-independent random streams.

Every random draw in the package goes through :func:`derive_rng` so that a
stream depends only on (seed, purpose, ids) and never on how many draws some
other component made before it.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_rng(seed: int, *parts) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFF] + [_key(p) & 0xFFFFFFFF for p in parts]
    return np.random.default_rng(entropy)
