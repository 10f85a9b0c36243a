"""Vocabularies, spherical token embeddings, and exact empirical distributions.

Tokens live in ``{0..K-1}``; index ``K`` is reserved for the mask symbol,
whose embedding row is exactly zero.  Datasets are weighted finite sets of
equal-length sequences, so every downstream posterior can be computed by
exact enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidVocabError

UNIT_NORM_TOL = 1e-12
WEIGHT_TOL = 1e-12
MIN_ROW_DISTANCE = 1e-9


@dataclass(frozen=True)
class Vocab:
    """Token ids 0..size-1; ``mask_id == size`` is reserved and never appears in data."""

    size: int

    def __post_init__(self):
        if self.size < 2:
            raise InvalidVocabError(f"vocab size must be >= 2, got {self.size}")

    @property
    def mask_id(self) -> int:
        return self.size


@dataclass(frozen=True)
class EmbeddingTable:
    """K unit vectors in R^d plus one all-zero row for the mask token.

    ``vectors`` has shape (K+1, d); row K is the mask row.
    """

    vocab: Vocab
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=float)
        K = self.vocab.size
        if vecs.ndim != 2 or vecs.shape[0] != K + 1:
            raise DimensionError(
                f"expected ({K + 1}, d) embedding matrix, got shape {vecs.shape}"
            )
        norms = np.linalg.norm(vecs[:K], axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise InvalidVocabError("token embedding rows must have unit norm")
        if np.any(vecs[K] != 0.0):
            raise InvalidVocabError("mask row must be exactly zero")
        for a in range(K):
            d = np.linalg.norm(vecs[a + 1 : K] - vecs[a], axis=1)
            if d.size and d.min() <= MIN_ROW_DISTANCE:
                raise InvalidVocabError("embedding rows must be pairwise distinct")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def encode(self, tokens: np.ndarray) -> np.ndarray:
        """Map token ids (mask id allowed) to embedding rows."""
        tokens = np.asarray(tokens)
        if tokens.size and (tokens.min() < 0 or tokens.max() > self.vocab.size):
            raise InvalidVocabError("token id out of range")
        return self.vectors[tokens]

    def to_csv(self, path) -> None:
        """One row per token (mask row last), d comma-separated columns."""
        np.savetxt(path, self.vectors, delimiter=",", fmt="%.17g")


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Weighted finite set of token sequences defining the data distribution exactly.

    Duplicate sequences are merged into their summed weight at construction.
    """

    vocab: Vocab
    sequences: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        seqs = np.asarray(self.sequences, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if seqs.ndim != 2:
            raise DimensionError("sequences must be a (N, L) integer array")
        if w.shape != (seqs.shape[0],):
            raise DimensionError("one weight per sequence required")
        if np.any(w < 0):
            raise InvalidVocabError("weights must be non-negative")
        if seqs.size and (seqs.min() < 0 or seqs.max() >= self.vocab.size):
            raise InvalidVocabError("dataset sequences may not contain the mask id")
        # merge duplicates so P(x) stays a proper distribution
        uniq, inverse = np.unique(seqs, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inverse, w)
        total = merged.sum()
        if total <= 0:
            raise InvalidVocabError("weights must sum to a positive value")
        merged /= total
        uniq.setflags(write=False)
        merged.setflags(write=False)
        object.__setattr__(self, "sequences", uniq)
        object.__setattr__(self, "weights", merged)

    @property
    def n_sequences(self) -> int:
        return self.sequences.shape[0]

    @property
    def length(self) -> int:
        return self.sequences.shape[1]

    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)


def make_circle_embeddings(K: int) -> EmbeddingTable:
    """Unit-circle embeddings with equal angular spacing, e(k) = (cos, sin)(2*pi*k/K)."""
    if K < 2:
        raise InvalidVocabError(f"need K >= 2, got {K}")
    angles = 2.0 * np.pi * np.arange(K) / K
    rows = np.column_stack([np.cos(angles), np.sin(angles)])
    vecs = np.vstack([rows / np.linalg.norm(rows, axis=1, keepdims=True), np.zeros(2)])
    return EmbeddingTable(Vocab(K), vecs)


def make_sphere_embeddings(K: int, d: int, seed: int) -> EmbeddingTable:
    """Normalized isotropic-Gaussian rows; deterministic given seed."""
    if K < 2:
        raise InvalidVocabError(f"need K >= 2, got {K}")
    if d < 2:
        raise InvalidVocabError(f"need d >= 2, got {d}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), K, d]))
    rows = np.empty((K, d))
    for k in range(K):
        while True:
            v = rng.standard_normal(d)
            n = np.linalg.norm(v)
            if n > 1e-12:
                rows[k] = v / n
                break
    vecs = np.vstack([rows, np.zeros(d)])
    return EmbeddingTable(Vocab(K), vecs)


def cyclic_dataset(K: int) -> EmpiricalDistribution:
    """All K cyclic shifts of [0..K-1], uniformly weighted."""
    if K < 2:
        raise InvalidVocabError(f"need K >= 2, got {K}")
    base = np.arange(K)
    seqs = np.stack([np.roll(base, i) for i in range(K)])
    return EmpiricalDistribution(Vocab(K), seqs, np.full(K, 1.0 / K))


def load_corpus(path, vocab_size: int, weighted: bool = False) -> EmpiricalDistribution:
    """One sequence per line, whitespace-separated integer token ids.

    With ``weighted=True`` the first column of each line is a real weight.
    """
    seqs, weights = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if weighted:
                weights.append(float(parts[0]))
                parts = parts[1:]
            else:
                weights.append(1.0)
            seqs.append([int(p) for p in parts])
    if not seqs:
        raise InvalidVocabError(f"no sequences in corpus file {path}")
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise DimensionError("all corpus sequences must share one length")
    return EmpiricalDistribution(Vocab(vocab_size), np.array(seqs), np.array(weights))
