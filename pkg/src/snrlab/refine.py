"""Discrete masked-refinement samplers over the exact posterior.

A refinement run keeps a draft over Vocab ∪ {mask} and, at each of T steps
with normalized time t_k = 1 - k/T, (i) computes exact token marginals for
the current draft, (ii) reveals masked positions down to the mask-ratio
schedule, and (iii) remasks visible positions either with the capped-loop
probability q(t) or by confidence.  Visible tokens enter the posterior at a
finite SNR (soft conditioning), so visible-but-wrong tokens stay correctable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable
import json

import numpy as np

from .corpus import EmbeddingTable, EmpiricalDistribution
from .denoiser import ExactDenoiser
from .errors import ConfigError, InvalidBudgetError, UndefinedRatioError
from .seeding import child_rng

DEFAULT_GAMMA_VIS = 10.0
DEFAULT_TOP_P = 0.9

# step-budget -> remask cap, log-linearly interpolated in between
ETA_CAP_TABLE = {128: 0.010, 256: 0.008, 512: 0.007, 1024: 0.002}


@dataclass(frozen=True)
class RemaskSchedule:
    """Remasking controls for a T-step refinement run.

    The loop window is an interval of normalized time t = 1 - k/T; remasking
    is active only for t_off <= t < t_on, with the noise level held at
    alpha_loop there.  Outside the window q(t) = 0.
    """

    strategy: str = "cap-loop"  # "cap-loop" | "confidence" | "none"
    eta_cap: float = 0.010
    t_on: float = 0.55
    t_off: float = 0.05
    alpha_loop: float = 0.9
    alpha_lo: float = 0.01  # alpha(1), fully-noisy end
    alpha_hi: float = 0.99  # alpha(t_min), near-clean end
    refresh_unmasked: bool = True
    confidence_threshold: float = 0.5
    confidence_max_per_step: int = 2
    mask_ratio: Callable[[float], float] | None = None  # default: linear in t

    def __post_init__(self):
        if self.strategy not in ("cap-loop", "confidence", "none"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.eta_cap <= 0:
            raise ConfigError("eta_cap must be positive")
        if not 0.0 <= self.t_off < self.t_on <= 1.0:
            raise ConfigError("need 0 <= t_off < t_on <= 1")
        if not 0.0 < self.alpha_loop < 1.0:
            raise ConfigError("alpha_loop must lie in (0, 1)")

    def in_window(self, t: float) -> bool:
        return self.t_off <= t < self.t_on

    def alpha(self, t: float, t_min: float) -> float:
        """Noise schedule: held at alpha_loop in the window, log-linear otherwise."""
        if self.in_window(t):
            return self.alpha_loop
        frac = (1.0 - t) / (1.0 - t_min) if t_min < 1.0 else 1.0
        return float(np.exp(np.log(self.alpha_lo) + frac * (np.log(self.alpha_hi) - np.log(self.alpha_lo))))


def remask_probability(t: float, r_t: float, schedule: RemaskSchedule) -> float:
    """Per-token remask probability among unmasked positions.

    q(t) = min(1, eta(t) / (1 - r(t))) with eta(t) = eta_cap * alpha / (1 - alpha),
    alpha held at alpha_loop inside the loop window; q = 0 outside it.
    """
    if not schedule.in_window(t):
        return 0.0
    if r_t >= 1.0:
        raise UndefinedRatioError("remask probability undefined with every position masked")
    eta = schedule.eta_cap * schedule.alpha_loop / (1.0 - schedule.alpha_loop)
    return min(1.0, eta / (1.0 - r_t))


def eta_cap_for_budget(T: int) -> float:
    """Remask cap for a step budget; log-linear interpolation between table entries."""
    if T < 1:
        raise InvalidBudgetError(f"step budget must be >= 1, got {T}")
    budgets = sorted(ETA_CAP_TABLE)
    if T <= budgets[0]:
        return ETA_CAP_TABLE[budgets[0]]
    if T >= budgets[-1]:
        return ETA_CAP_TABLE[budgets[-1]]
    if T in ETA_CAP_TABLE:
        return ETA_CAP_TABLE[T]
    lo = max(b for b in budgets if b < T)
    hi = min(b for b in budgets if b > T)
    frac = (np.log(T) - np.log(lo)) / (np.log(hi) - np.log(lo))
    return float(np.exp(np.log(ETA_CAP_TABLE[lo]) + frac * (np.log(ETA_CAP_TABLE[hi]) - np.log(ETA_CAP_TABLE[lo]))))


@dataclass(frozen=True)
class RefinementStep:
    """One refinement step: posterior snapshot plus the applied edits."""

    step: int
    t: float
    q: float
    draft_before: np.ndarray = field(repr=False)
    draft_after: np.ndarray = field(repr=False)
    masked_after: np.ndarray = field(repr=False)
    revealed: tuple[int, ...] = ()
    remasked: tuple[int, ...] = ()
    posterior: np.ndarray = field(default=None, repr=False)  # (L, K)

    @property
    def max_probs(self) -> np.ndarray:
        return self.posterior.max(axis=1)


@dataclass(frozen=True)
class RefinementTrace:
    initial_draft: np.ndarray = field(repr=False)
    steps: list[RefinementStep] = field(repr=False, default_factory=list)
    T: int = 0

    @property
    def final_draft(self) -> np.ndarray:
        return self.steps[-1].draft_after

    def drafts(self) -> np.ndarray:
        """Initial draft followed by the draft after every step, shape (T+1, L)."""
        return np.vstack([self.initial_draft] + [s.draft_after for s in self.steps])


def posterior_for_draft(
    draft: np.ndarray,
    gamma_vis: float,
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
    den: ExactDenoiser | None = None,
) -> np.ndarray:
    """Exact token marginals for a draft: visible tokens at SNR gamma_vis, masks at 0."""
    if gamma_vis <= 0:
        raise ConfigError("gamma_vis must be positive")
    if den is None:
        den = ExactDenoiser(data, emb)
    draft = np.asarray(draft, dtype=np.int64)
    z = gamma_vis * emb.encode(draft)  # mask rows are zero, so masked z_i = 0
    return den.token_marginals(z)


def top_p_sample(probs: np.ndarray, p: float, rng: np.random.Generator) -> int:
    """Sample from the top-p-truncated, renormalized categorical."""
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    cut = int(np.searchsorted(cum, p)) + 1
    kept = order[:cut]
    w = probs[kept] / probs[kept].sum()
    return int(rng.choice(kept, p=w))


def run_refinement(
    initial_draft: np.ndarray,
    T: int,
    schedule: RemaskSchedule,
    gamma_vis: float,
    top_p: float,
    seed: int,
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
) -> RefinementTrace:
    """Run T refinement steps from a draft over Vocab ∪ {mask}."""
    if T < 1:
        raise InvalidBudgetError(f"need T >= 1, got {T}")
    if not 0.0 < top_p <= 1.0:
        raise ConfigError("top_p must lie in (0, 1]")
    den = ExactDenoiser(data, emb)
    mask_id = data.vocab.mask_id
    draft = np.asarray(initial_draft, dtype=np.int64).copy()
    L = draft.size
    if draft.min() < 0 or draft.max() > mask_id:
        raise ConfigError("draft tokens out of range")
    rng = child_rng(seed)

    init_frac = float(np.mean(draft == mask_id))
    if schedule.mask_ratio is not None:
        ratio_fn = schedule.mask_ratio
    else:
        ratio_fn = lambda t: init_frac * t  # noqa: E731

    steps: list[RefinementStep] = []
    for k in range(T):
        t_k = 1.0 - k / T
        t_next = 1.0 - (k + 1) / T
        before = draft.copy()
        posterior = posterior_for_draft(draft, gamma_vis, data, emb, den=den)
        masked = draft == mask_id

        # reveal down to the mask-ratio target for the next time
        target = int(round(ratio_fn(t_next) * L))
        n_reveal = max(0, int(masked.sum()) - target)
        revealed: list[int] = []
        if n_reveal > 0:
            masked_idx = np.flatnonzero(masked)
            pick = rng.choice(masked_idx, size=n_reveal, replace=False)
            for i in sorted(int(v) for v in pick):
                draft[i] = top_p_sample(posterior[i], top_p, rng)
                revealed.append(i)
        masked = draft == mask_id

        # remask among the currently visible positions
        remasked: list[int] = []
        q = 0.0
        visible_idx = np.flatnonzero(~masked)
        if schedule.strategy == "cap-loop" and visible_idx.size:
            r_now = float(masked.mean())
            q = remask_probability(t_k, r_now, schedule)
            if q > 0.0:
                hits = rng.random(visible_idx.size) < q
                remasked = [int(i) for i in visible_idx[hits]]
        elif schedule.strategy == "confidence" and visible_idx.size:
            # confidence of a visible position = posterior mass on its committed
            # token, so visible-but-wrong tokens score low even when the
            # marginal itself is sharp
            conf = posterior[visible_idx, draft[visible_idx]]
            low = [int(i) for i, c in zip(visible_idx, conf) if c < schedule.confidence_threshold]
            conf = dict(zip((int(i) for i in visible_idx), conf))
            low.sort(key=lambda i: conf[i])
            remasked = low[: schedule.confidence_max_per_step]

        for i in remasked:
            if schedule.refresh_unmasked:
                draft[i] = top_p_sample(posterior[i], top_p, rng)
            else:
                draft[i] = mask_id
        masked = draft == mask_id

        steps.append(
            RefinementStep(
                step=k,
                t=t_k,
                q=q,
                draft_before=before,
                draft_after=draft.copy(),
                masked_after=masked.copy(),
                revealed=tuple(revealed),
                remasked=tuple(remasked),
                posterior=posterior,
            )
        )
    return RefinementTrace(np.asarray(initial_draft, dtype=np.int64), steps, T)


def fig5_toy_draft(K: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Canonical inpainting toy: truth [0..K-1], draft with two masks and two
    visible-but-wrong tokens (``__CDBFF`` for K=7)."""
    if K != 7:
        raise ConfigError("the canonical toy is defined for K = 7")
    truth = np.arange(K)
    draft = truth.copy()
    draft[0] = K  # mask
    draft[1] = K  # mask
    draft[4] = 1  # B instead of E
    draft[6] = 5  # F instead of G
    return draft, truth


def write_trace_jsonl(trace: RefinementTrace, path) -> None:
    """One JSON record per step: draft, masked set, q(t), per-position max-prob."""
    with open(path, "w") as fh:
        for s in trace.steps:
            rec = {
                "step": s.step,
                "t": round(s.t, 10),
                "q": s.q,
                "draft": [int(v) for v in s.draft_after],
                "masked": [int(i) for i in np.flatnonzero(s.masked_after)],
                "revealed": list(s.revealed),
                "remasked": list(s.remasked),
                "max_prob": [round(float(v), 10) for v in s.max_probs],
            }
            fh.write(json.dumps(rec) + "\n")
