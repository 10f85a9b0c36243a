"""Token-wise mixed SNR sampling and forward corruption of sequences.

A fraction ~1/k of positions get endpoint-style ("ROAR") SNRs near 0 or near
gamma_max; the rest draw intermediate SNRs from a lognormal.  Endpoints can
be smoothed (uniform ranges) or atomic ({0, gamma_max} exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingTable
from .errors import ConfigError, InvalidSnrError, InvalidVocabError
from .seeding import child_rng

# defaults mirror the reference training configuration:
# k=10, lognormal(mu=1.65, sigma=0.9), gamma_max=50, lognormal unclipped.
# gamma_min and c are implementation defaults (no published numeric values).


@dataclass(frozen=True)
class CorruptionConfig:
    k: float = 10.0
    mu: float = 1.65
    sigma: float = 0.9
    gamma_min: float = 0.5
    gamma_max: float = 50.0
    c: float = 0.9
    mode: str = "smoothed"  # "smoothed" | "atomic"
    clip_lognormal: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not self.gamma_min < self.gamma_max:
            raise ConfigError("need gamma_min < gamma_max")
        if not 0.0 <= self.c <= 1.0:
            raise ConfigError("c must lie in [0, 1]")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.mode not in ("smoothed", "atomic"):
            raise ConfigError(f"unknown mode {self.mode!r}")


def sample_roar_set(L: int, k: float, seed: int) -> np.ndarray:
    """Boolean endpoint-token mask: each position included with probability 1/k."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    rng = child_rng(seed)
    return rng.random(L) < 1.0 / k


def sample_gamma_vector(L: int, config: CorruptionConfig, seed: int) -> np.ndarray:
    """Per-token SNR draw: endpoint ranges (or atoms) for ROAR tokens, lognormal otherwise."""
    rng = child_rng(seed)
    roar = rng.random(L) < 1.0 / config.k
    gamma = np.empty(L)

    high = rng.random(L) < 0.5  # endpoint side, drawn per position
    if config.mode == "smoothed":
        low_draw = rng.uniform(0.0, config.gamma_min, L)
        high_draw = rng.uniform(config.c * config.gamma_max, config.gamma_max, L)
    else:
        low_draw = np.zeros(L)
        high_draw = np.full(L, config.gamma_max)
    gamma[roar] = np.where(high, high_draw, low_draw)[roar]

    logn = rng.lognormal(config.mu, config.sigma, L)
    if config.clip_lognormal:
        logn = np.clip(logn, config.gamma_min, config.gamma_max)
    gamma[~roar] = logn[~roar]
    return gamma


def corrupt(x: np.ndarray, gamma: np.ndarray, emb: EmbeddingTable, seed: int) -> np.ndarray:
    """Forward corruption z_i = gamma_i * enc(x_i) + sqrt(gamma_i) * eps_i.

    gamma_i = 0 gives an exactly zero row (the mask endpoint).
    """
    x = np.asarray(x, dtype=np.int64)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != x.shape:
        raise InvalidVocabError("x and gamma must have matching shapes")
    if np.any(gamma < 0):
        raise InvalidSnrError("gamma must be non-negative")
    x_emb = emb.encode(x)
    rng = child_rng(seed)
    noise = rng.standard_normal(x_emb.shape)
    g = gamma[:, None]
    return g * x_emb + np.sqrt(g) * noise
