"""Deterministic fan-out from one master seed to named sub-streams.

Every stochastic component (model init, sampling, coupling draws, ...)
pulls its generator through ``substream(master, name)``.  The child seed
sequence is ``SeedSequence((master, crc32(name)))``, so streams are
independent of each other, reproducible across runs, and insensitive to
the order in which components ask for them.
"""

from __future__ import annotations

import zlib

import numpy as np


def child_seed(master: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(master), zlib.crc32(name.encode())))


def substream(master: int, name: str) -> np.random.Generator:
    """Named, order-independent random stream derived from the master seed."""
    return np.random.default_rng(child_seed(master, name))
