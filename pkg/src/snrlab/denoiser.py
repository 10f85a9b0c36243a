"""Exact posterior and MMSE denoiser over an empirical distribution.

The posterior over dataset sequences given a noisy state ``z`` is the
exponentially tilted distribution ``w(x) ∝ P(x) * exp(sum_i z_i . x_i)``,
which does not depend on the SNR at which ``z`` was produced.  Everything
here is computed by exact enumeration in log space with max-subtraction,
so magnitudes up to |z| ~ 100 stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .corpus import EmbeddingTable, EmpiricalDistribution
from .errors import DimensionError, EmptySupportError, InvalidSnrError


@dataclass(frozen=True)
class SequencePosterior:
    """Normalized log-weights over the dataset sequences."""

    log_weights: np.ndarray = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


@dataclass(frozen=True)
class TokenPosterior:
    """Per-position categorical over the data vocabulary, shape (L, K)."""

    probs: np.ndarray = field(repr=False)


class ExactDenoiser:
    """Enumeration denoiser bound to one (dataset, embedding) pair.

    ``observed`` restricts the support to sequences consistent with a partial
    token assignment (hard conditioning, the infinite-SNR limit).  All methods
    accept a single state of shape (L, d) or a batch (..., L, d).
    """

    def __init__(
        self,
        data: EmpiricalDistribution,
        emb: EmbeddingTable,
        observed: dict[int, int] | None = None,
    ):
        if data.vocab.size != emb.vocab.size:
            raise DimensionError("dataset and embedding table vocab sizes differ")
        seqs = data.sequences
        log_w = data.log_weights()
        if observed:
            keep = np.ones(data.n_sequences, dtype=bool)
            for pos, tok in observed.items():
                if not 0 <= pos < data.length:
                    raise DimensionError(f"observed position {pos} out of range")
                if not 0 <= tok < data.vocab.size:
                    raise DimensionError(f"observed token {tok} out of range")
                keep &= seqs[:, pos] == tok
            if not keep.any():
                raise EmptySupportError(
                    "no dataset sequence is consistent with the observation"
                )
            seqs = seqs[keep]
            log_w = log_w[keep]
            log_w = log_w - logsumexp(log_w)
        self.data = data
        self.emb = emb
        self.L = data.length
        self.K = data.vocab.size
        self.d = emb.dim
        self.seqs = seqs
        self.prior_log_weights = log_w
        self.seq_emb = emb.encode(seqs)  # (N, L, d)
        eye = np.eye(self.K)
        self.seq_onehot = eye[seqs]  # (N, L, K)

    def _check(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim < 2 or z.shape[-2:] != (self.L, self.d):
            raise DimensionError(
                f"state must end in shape ({self.L}, {self.d}), got {z.shape}"
            )
        return z

    def log_posterior(self, z: np.ndarray) -> np.ndarray:
        """Normalized log-weights, shape (..., N)."""
        z = self._check(z)
        tilt = np.einsum("...ld,nld->...n", z, self.seq_emb)
        scores = tilt + self.prior_log_weights
        return scores - logsumexp(scores, axis=-1, keepdims=True)

    def denoise(self, z: np.ndarray) -> np.ndarray:
        """Posterior-mean embeddings, shape (..., L, d).  No SNR argument."""
        w = np.exp(self.log_posterior(z))
        return np.einsum("...n,nld->...ld", w, self.seq_emb)

    def token_marginals(self, z: np.ndarray) -> np.ndarray:
        """Per-position token probabilities, shape (..., L, K)."""
        w = np.exp(self.log_posterior(z))
        return np.einsum("...n,nlk->...lk", w, self.seq_onehot)

    def energy(self, z: np.ndarray) -> np.ndarray:
        """log sum_x P(x) exp(sum_i z_i . x_i); gradient in z equals denoise(z)."""
        z = self._check(z)
        tilt = np.einsum("...ld,nld->...n", z, self.seq_emb)
        return logsumexp(tilt + self.prior_log_weights, axis=-1)


def tilted_posterior(
    z: np.ndarray, data: EmpiricalDistribution, emb: EmbeddingTable
) -> SequencePosterior:
    return SequencePosterior(ExactDenoiser(data, emb).log_posterior(z))


def denoise(z: np.ndarray, data: EmpiricalDistribution, emb: EmbeddingTable) -> np.ndarray:
    return ExactDenoiser(data, emb).denoise(z)


def denoise_gaussian_oracle(
    z: np.ndarray,
    gamma: np.ndarray,
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
) -> np.ndarray:
    """Posterior mean via the full Gaussian channel, without the spherical cancellation.

    Sequence weights ∝ P(x) * prod_i exp(-|z_i - gamma_i x_i|^2 / (2 gamma_i)).
    Independent oracle for the tilted-form denoiser; requires gamma_i > 0.
    """
    den = ExactDenoiser(data, emb)
    z = den._check(z)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (den.L,):
        raise DimensionError(f"gamma must have shape ({den.L},), got {gamma.shape}")
    if np.any(gamma <= 0):
        raise InvalidSnrError("oracle requires strictly positive per-token SNR")
    diff = z[..., None, :, :] - gamma[:, None] * den.seq_emb  # (..., N, L, d)
    sq = np.sum(diff**2, axis=-1)  # (..., N, L)
    log_lik = -0.5 * np.sum(sq / gamma, axis=-1)  # (..., N)
    scores = log_lik + den.prior_log_weights
    log_post = scores - logsumexp(scores, axis=-1, keepdims=True)
    return np.einsum("...n,nld->...ld", np.exp(log_post), den.seq_emb)


def token_marginals(
    z: np.ndarray, data: EmpiricalDistribution, emb: EmbeddingTable
) -> TokenPosterior:
    return TokenPosterior(ExactDenoiser(data, emb).token_marginals(z))


def conditional_denoise(
    z: np.ndarray,
    observed: dict[int, int],
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
) -> np.ndarray:
    """Denoise with the support restricted to sequences matching ``observed``."""
    return ExactDenoiser(data, emb, observed=observed).denoise(z)


def hopfield_energy(
    z: np.ndarray, data: EmpiricalDistribution, emb: EmbeddingTable
) -> float:
    return float(ExactDenoiser(data, emb).energy(z))
