"""Deterministic RNG streams keyed by (seed, label, index, ...)."""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def derived_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``seed``.

    The same ``(seed, keys)`` always yields the same stream regardless of
    which process or in which order streams are requested.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.default_rng(ss)
