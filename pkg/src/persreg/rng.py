"""Seed streams.

Every random draw in the package goes through :func:`generator`, which builds
a numpy ``Generator`` on the PCG64 bit generator (PCG-XSL-RR 128/64) seeded by
``numpy.random.SeedSequence`` from a list of integers.  Independent purposes
get independent streams by appending a fixed purpose offset to the run seed,
so a port that reproduces SeedSequence + PCG64 reproduces the draws.
"""
from __future__ import annotations

from typing import Sequence, Union

import numpy as np

INIT = 0
SPLIT = 1
SHUFFLE = 2
DROPOUT = 3
SYNTH = 4

SeedLike = Union[int, Sequence[int]]


def entropy(seed: SeedLike, *extra: int) -> list[int]:
    base = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return base + [int(e) for e in extra]


def generator(seed: SeedLike, *extra: int) -> np.random.Generator:
    """Generator for the stream ``(seed, *extra)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy(seed, *extra))))
