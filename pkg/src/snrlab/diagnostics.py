"""Decoding diagnostics, rewrite counts, and calibration metrics.

Per-step quantities: mean residual uncertainty u_t, mean entropy H_t (nats),
mean top-p nucleus size k_t, remask ratio r_t, and realized token-change rate
Delta_t.  Calibration is measured as ECE over equal-width confidence bins
with a teacher-forcing harness on corrupted inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import EmbeddingTable, EmpiricalDistribution
from .denoiser import ExactDenoiser
from .errors import ConfigError, EmptyReportError
from .refine import RefinementTrace
from .seeding import child_rng


@dataclass(frozen=True)
class StepDiagnostics:
    t: float
    u: float
    H: float
    k: float
    r: float
    delta: float


@dataclass(frozen=True)
class CalibrationReport:
    bin_edges: np.ndarray = field(repr=False)
    bin_confidence: np.ndarray = field(repr=False)
    bin_accuracy: np.ndarray = field(repr=False)
    bin_count: np.ndarray = field(repr=False)
    ece: float = 0.0
    n_scored: int = 0


def nucleus_size(probs: np.ndarray, p: float) -> int:
    """Size of the smallest token set with cumulative mass >= p.

    Probabilities tied with the boundary entry are included before counting.
    """
    order = np.argsort(-probs, kind="stable")
    sorted_p = probs[order]
    cum = np.cumsum(sorted_p)
    cut = int(np.searchsorted(cum, p))
    boundary = sorted_p[cut]
    return int(np.sum(sorted_p >= boundary))


def step_diagnostics(
    posterior: np.ndarray,
    prev_draft: np.ndarray,
    new_draft: np.ndarray,
    remask_set,
    p: float,
    t: float = 0.0,
) -> StepDiagnostics:
    """Summaries of one decoding step from its (L, K) posterior and drafts."""
    if not 0.0 < p < 1.0:
        raise ConfigError("top-p must lie in (0, 1)")
    posterior = np.asarray(posterior, dtype=float)
    prev_draft = np.asarray(prev_draft)
    new_draft = np.asarray(new_draft)
    L = posterior.shape[0]
    if prev_draft.shape != (L,) or new_draft.shape != (L,):
        raise ConfigError("drafts must match the posterior length")
    u = float(np.mean(1.0 - posterior.max(axis=1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(posterior > 0, posterior * np.log(posterior), 0.0)
    H = float(np.mean(-plogp.sum(axis=1)))
    k = float(np.mean([nucleus_size(row, p) for row in posterior]))
    r = len(set(remask_set)) / L
    delta = float(np.mean(prev_draft != new_draft))
    return StepDiagnostics(t=t, u=u, H=H, k=k, r=r, delta=delta)


def trace_diagnostics(trace: RefinementTrace, p: float = 0.9) -> list[StepDiagnostics]:
    return [
        step_diagnostics(s.posterior, s.draft_before, s.draft_after, s.remasked, p, t=s.t)
        for s in trace.steps
    ]


def rewrite_counts(trace: RefinementTrace) -> tuple[np.ndarray, float]:
    """Per-position token-change counts R_i over the trace, and their mean.

    The mask id counts as an ordinary symbol, so mask->token and token->mask
    transitions are both rewrites.
    """
    drafts = trace.drafts()
    if drafts.shape[0] < 2:
        raise ConfigError("trace needs at least two drafts for rewrite counts")
    R = np.sum(drafts[1:] != drafts[:-1], axis=0)
    return R, float(R.mean())


def over_refinement_flags(
    trace: RefinementTrace,
    r_floor: float = 0.05,
    delta_ceiling: float = 0.01,
    p: float = 0.9,
) -> list[int]:
    """Steps with non-trivial remask ratio but tiny realized change (churn)."""
    if not (0.0 < r_floor < 1.0 and 0.0 < delta_ceiling < 1.0):
        raise ConfigError("thresholds must lie in (0, 1)")
    flags = []
    for diag, s in zip(trace_diagnostics(trace, p), trace.steps):
        if diag.r >= r_floor and diag.delta <= delta_ceiling:
            flags.append(s.step)
    return flags


def calibration_report(confidences, correct, n_bins: int = 15) -> CalibrationReport:
    """Equal-width reliability bins and ECE over (confidence, correct?) scores."""
    conf = np.asarray(confidences, dtype=float)
    hit = np.asarray(correct, dtype=bool)
    if conf.size == 0:
        raise EmptyReportError("no scored tokens")
    if n_bins < 2:
        raise ConfigError("need n_bins >= 2")
    if conf.min() < 0.0 or conf.max() > 1.0:
        raise ConfigError("confidences must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.digitize(conf, edges[1:-1]), 0, n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    with np.errstate(invalid="ignore"):
        mean_conf = np.where(count > 0, np.bincount(idx, weights=conf, minlength=n_bins) / np.maximum(count, 1), 0.0)
        acc = np.where(count > 0, np.bincount(idx, weights=hit.astype(float), minlength=n_bins) / np.maximum(count, 1), 0.0)
    ece = float(np.sum(count / conf.size * np.abs(mean_conf - acc)))
    return CalibrationReport(edges, mean_conf, acc, count, ece, int(conf.size))


def teacher_forcing_scores(
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
    snr: float,
    n_draws: int,
    seed: int,
    temper_power: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt dataset sequences at a fixed SNR and score exact-posterior argmax.

    Sequences are drawn from P(x); each token's max-prob is the confidence and
    the prediction is correct when the argmax matches the truth.  A
    ``temper_power`` != 1 deliberately mis-tempers the posterior (probabilities
    raised to that power and renormalized) for calibration ablations.
    """
    if snr <= 0:
        raise ConfigError("snr must be positive")
    den = ExactDenoiser(data, emb)
    rng = child_rng(seed)
    seq_idx = rng.choice(data.n_sequences, size=n_draws, p=data.weights)
    x = data.sequences[seq_idx]  # (n, L)
    x_emb = emb.encode(x)
    z = snr * x_emb + np.sqrt(snr) * rng.standard_normal(x_emb.shape)
    probs = den.token_marginals(z)  # (n, L, K)
    if temper_power != 1.0:
        probs = probs**temper_power
        probs /= probs.sum(axis=-1, keepdims=True)
    conf = probs.max(axis=-1).ravel()
    pred = probs.argmax(axis=-1)
    correct = (pred == x).ravel()
    return conf, correct
