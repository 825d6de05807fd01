"""Named random sub-streams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Generator for stream ``name`` (and optional indices) under ``seed``."""
    key = [zlib.crc32(name.encode("utf-8")), *[int(i) for i in index]]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))
