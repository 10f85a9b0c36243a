"""Softmax converter from noisy embeddings to token-simplex mixtures.

``convert`` maps a noisy row z to softmax(beta * z . e_v + b_v) over the K
real tokens plus the zero mask row.  The scalar temperature and the bias
vector are the only trainable parameters; gradients are analytic, so training
is a small deterministic gradient descent with a halving line search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .corpus import EmbeddingTable
from .errors import ConfigError, InvalidTargetError, TrainingError
from .seeding import child_rng

DEFAULT_MASK_BIAS = 3.0


@dataclass(frozen=True)
class ConverterParams:
    beta: float
    bias: np.ndarray = field(repr=False)  # (K+1,), index K = mask

    def __post_init__(self):
        b = np.asarray(self.bias, dtype=float)
        if self.beta <= 0 or not np.isfinite(self.beta):
            raise ConfigError("temperature must be positive and finite")
        if b.ndim != 1 or not np.all(np.isfinite(b)):
            raise ConfigError("bias must be a finite vector")
        b.setflags(write=False)
        object.__setattr__(self, "bias", b)


def init_params(K: int, mask_bias: float = DEFAULT_MASK_BIAS) -> ConverterParams:
    """Unit temperature, zero bias except a mask-favoring mask bias."""
    b = np.zeros(K + 1)
    b[K] = mask_bias
    return ConverterParams(1.0, b)


def _logits(z_rows: np.ndarray, emb: EmbeddingTable, params: ConverterParams) -> np.ndarray:
    # (n, K+1); the zero mask row contributes only its bias
    return params.beta * (z_rows @ emb.vectors.T) + params.bias


def convert(z_row: np.ndarray, emb: EmbeddingTable, params: ConverterParams) -> np.ndarray:
    """(K+1)-simplex mixture for one noisy row (or a batch of rows)."""
    z = np.atleast_2d(np.asarray(z_row, dtype=float))
    logits = _logits(z, emb, params)
    probs = np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
    return probs[0] if np.asarray(z_row).ndim == 1 else probs


def converter_nll(
    tokens: np.ndarray,
    z_rows: np.ndarray,
    emb: EmbeddingTable,
    params: ConverterParams,
) -> float:
    """Mean negative log converted mass on the true token."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if np.any(tokens < 0) or np.any(tokens >= emb.vocab.size):
        raise InvalidTargetError("targets must be real tokens, never the mask id")
    logits = _logits(np.asarray(z_rows, dtype=float), emb, params)
    log_probs = logits - logsumexp(logits, axis=-1, keepdims=True)
    return float(-log_probs[np.arange(tokens.size), tokens].mean())


def _nll_and_grad(tokens, z_rows, emb, params):
    scores = z_rows @ emb.vectors.T  # (n, K+1)
    logits = params.beta * scores + params.bias
    log_probs = logits - logsumexp(logits, axis=-1, keepdims=True)
    probs = np.exp(log_probs)
    n = tokens.size
    nll = -log_probs[np.arange(n), tokens].mean()
    resid = probs.copy()
    resid[np.arange(n), tokens] -= 1.0
    grad_bias = resid.mean(axis=0)
    grad_beta = float((resid * scores).sum(axis=1).mean())
    return float(nll), grad_beta, grad_bias


def train_converter(
    tokens: np.ndarray,
    z_rows: np.ndarray,
    emb: EmbeddingTable,
    params: ConverterParams,
    lr: float = 0.5,
    n_iters: int = 5000,
) -> tuple[ConverterParams, np.ndarray]:
    """Full-batch gradient descent on the converter cross-entropy.

    A halving line search keeps the loss trace non-increasing; embeddings stay
    frozen.  Returns (final params, loss trace of length n_iters + 1).
    """
    if lr <= 0 or n_iters < 0:
        raise ConfigError("need lr > 0 and n_iters >= 0")
    tokens = np.asarray(tokens, dtype=np.int64)
    if np.any(tokens == emb.vocab.mask_id):
        raise InvalidTargetError("targets must be real tokens, never the mask id")
    z_rows = np.asarray(z_rows, dtype=float)

    loss, g_beta, g_bias = _nll_and_grad(tokens, z_rows, emb, params)
    trace = [loss]
    for it in range(n_iters):
        if not np.isfinite(loss):
            raise TrainingError(f"loss became non-finite at iteration {it}")
        step = lr
        while True:
            beta_new = max(params.beta - step * g_beta, 1e-8)
            cand = ConverterParams(beta_new, params.bias - step * g_bias)
            cand_loss, cand_gb, cand_gbias = _nll_and_grad(tokens, z_rows, emb, cand)
            if cand_loss <= loss or step < 1e-12:
                break
            step *= 0.5
        if cand_loss <= loss:
            params, loss, g_beta, g_bias = cand, cand_loss, cand_gb, cand_gbias
        trace.append(loss)
    return params, np.array(trace)


def sample_single_token_pairs(
    emb: EmbeddingTable,
    n: int,
    seed: int,
    mu: float = 1.65,
    sigma: float = 0.9,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(token, gamma, z_row) corruption draws for single-token training.

    Tokens uniform over the vocabulary; SNR lognormal(mu, sigma).
    """
    rng = child_rng(seed)
    K = emb.vocab.size
    tokens = rng.integers(0, K, n)
    gamma = rng.lognormal(mu, sigma, n)
    noise = rng.standard_normal((n, emb.dim))
    z = gamma[:, None] * emb.vectors[tokens] + np.sqrt(gamma)[:, None] * noise
    return tokens, gamma, z


def bayes_single_token_posterior(z_rows: np.ndarray, emb: EmbeddingTable) -> np.ndarray:
    """Exact posterior over real tokens for a single position with uniform prior."""
    z = np.atleast_2d(np.asarray(z_rows, dtype=float))
    scores = z @ emb.vectors[: emb.vocab.size].T
    return np.exp(scores - logsumexp(scores, axis=-1, keepdims=True))


def restricted_mixture(probs: np.ndarray) -> np.ndarray:
    """Renormalize a (K+1)-mixture over the real tokens only."""
    real = probs[..., :-1]
    return real / real.sum(axis=-1, keepdims=True)


def mean_kl_to_bayes(
    params: ConverterParams,
    emb: EmbeddingTable,
    gamma: float,
    n: int,
    seed: int,
) -> float:
    """Mean KL(Bayes posterior || converted mixture restricted to real tokens)."""
    rng = child_rng(seed)
    K = emb.vocab.size
    tokens = rng.integers(0, K, n)
    noise = rng.standard_normal((n, emb.dim))
    z = gamma * emb.vectors[tokens] + np.sqrt(gamma) * noise
    p = bayes_single_token_posterior(z, emb)
    q = restricted_mixture(convert(z, emb, params))
    kl = np.sum(p * (np.log(np.clip(p, 1e-300, None)) - np.log(np.clip(q, 1e-300, None))), axis=-1)
    return float(kl.mean())


def save_params(params: ConverterParams, path) -> None:
    """Plain-text key-value serialization."""
    with open(path, "w") as fh:
        fh.write(f"beta {float(params.beta)!r}\n")
        for v in params.bias:
            fh.write(f"bias {float(v)!r}\n")


def load_params(path) -> ConverterParams:
    beta = None
    bias = []
    with open(path) as fh:
        for line in fh:
            key, val = line.split()
            if key == "beta":
                beta = float(val)
            elif key == "bias":
                bias.append(float(val))
            else:
                raise ConfigError(f"unknown key {key!r} in {path}")
    if beta is None or not bias:
        raise ConfigError(f"incomplete converter params in {path}")
    return ConverterParams(beta, np.array(bias))
