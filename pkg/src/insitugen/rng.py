"""Seeded, splittable random streams.

Every random draw in the package flows from one named run seed through
counter-based Philox substreams keyed by string scope labels, so any module
(or any record within a module) can re-derive its stream independently of
call order. Keying is stable across processes: labels are hashed with
blake2, never with Python's salted hash().
"""

from __future__ import annotations

import hashlib

import numpy as np


def _scope_words(scope: tuple[str | int, ...]) -> list[int]:
    h = hashlib.blake2b(digest_size=16)
    for part in scope:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    d = h.digest()
    return [int.from_bytes(d[:8], "little"), int.from_bytes(d[8:], "little")]


def substream(seed: int, *scope: str | int) -> np.random.Generator:
    """Independent generator for (seed, scope); same inputs, same stream."""
    entropy = [seed & 0xFFFFFFFFFFFFFFFF] + _scope_words(scope)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
