"""Deterministic seed derivation.

All stochastic code derives child generators from a master seed through
``child_rng(master, *stream)``.  The stream is a tuple of small non-negative
integers acting as a counter scheme (e.g. ``(chain_index,)`` or
``(grid_index, token_index)``), so independent workers can draw from disjoint
streams and a parallel run reproduces the sequential one bit for bit.
"""

from __future__ import annotations

import numpy as np


def child_seed_sequence(master: int, *stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), *[int(s) for s in stream]])


def child_rng(master: int, *stream: int) -> np.random.Generator:
    """Generator for the given (master seed, counter...) stream."""
    return np.random.default_rng(child_seed_sequence(master, *stream))
