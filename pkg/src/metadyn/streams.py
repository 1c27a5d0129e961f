"""Seeded random-number streams for replicas and coupled runs."""

from __future__ import annotations

import numpy as np


def derive_stream(seed: int, replica: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for ``(seed, replica)``.

    Two calls with the same arguments return generators producing identical
    output, which is how coupled (common-random-number) runs are built.
    """
    if seed < 0 or replica < 0:
        raise ValueError("seed and replica index must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replica),))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an integer seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return derive_stream(int(rng))
