"""Deterministic, splittable random-stream derivation.

Every replication gets an independent generator derived from
``(base_seed, *key)`` via :class:`numpy.random.SeedSequence`, so results do
not depend on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np


def stream(base_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for stream ``key`` under ``base_seed``.

    Identical ``(base_seed, key)`` always yields the identical stream;
    distinct keys yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=tuple(key)))
