"""Per-token SNR paths and simulation of the localization SDEs.

The conditional process ``dz_i = x_i dγ_i + sqrt(dγ_i) dW_i`` is linear given
the data sequence, so it is simulated with exact Gaussian increments.  The
unconditional generative process replaces ``x_i`` with the exact denoiser and
is integrated with Euler-Maruyama, starting from z = 0 (the forward process's
γ = 0 endpoint, so there is no prior mismatch by construction).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import EmbeddingTable, EmpiricalDistribution
from .denoiser import ExactDenoiser
from .errors import InvalidPathError, InvalidVocabError
from .seeding import child_rng

DEFAULT_GAMMA_END = 50.0
DEFAULT_N_STEPS = 1000


@dataclass(frozen=True)
class SnrPath:
    """Piecewise-linear per-token SNR schedules.

    ``knots_t``: strictly increasing times, shape (n+1,), starting at 0.
    ``knots_gamma``: SNR at each knot per token, shape (n+1, L); each column is
    non-decreasing and starts at 0.
    """

    knots_t: np.ndarray = field(repr=False)
    knots_gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.knots_t, dtype=float)
        g = np.asarray(self.knots_gamma, dtype=float)
        if t.ndim != 1 or g.ndim != 2 or g.shape[0] != t.shape[0]:
            raise InvalidPathError("knots_t (n+1,) and knots_gamma (n+1, L) required")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise InvalidPathError("knot times must start at 0 and strictly increase")
        if np.any(g[0] != 0.0):
            raise InvalidPathError("gamma(0) must be exactly 0 for every token")
        if np.any(np.diff(g, axis=0) < 0):
            raise InvalidPathError("gamma must be non-decreasing along the path")
        t.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "knots_t", t)
        object.__setattr__(self, "knots_gamma", g)

    @property
    def n_tokens(self) -> int:
        return self.knots_gamma.shape[1]

    @property
    def n_steps(self) -> int:
        return self.knots_t.shape[0] - 1

    def gamma_at(self, t: float) -> np.ndarray:
        """Linear interpolation of the per-token SNR at time t."""
        return np.array(
            [np.interp(t, self.knots_t, self.knots_gamma[:, i]) for i in range(self.n_tokens)]
        )


@dataclass(frozen=True)
class Trajectory:
    """States recorded at the path knots; the last state is terminal."""

    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)  # (n+1, L, d)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class ArPathSpec:
    """AR contour for one focus token (0-based).

    Tokens before ``focus`` are conditioned at infinite SNR (handled by hard
    conditioning), ``focus`` sweeps 0 -> gamma_end, later tokens stay at 0.
    """

    n_tokens: int
    focus: int
    gamma_end: float

    def __post_init__(self):
        if not 0 <= self.focus < self.n_tokens:
            raise InvalidPathError(
                f"focus token {self.focus} out of range for L={self.n_tokens}"
            )
        if self.gamma_end <= 0:
            raise InvalidPathError("gamma_end must be positive")

    @property
    def conditioned(self) -> tuple[int, ...]:
        return tuple(range(self.focus))

    @property
    def pinned_at_zero(self) -> tuple[int, ...]:
        return tuple(range(self.focus + 1, self.n_tokens))


def diagonal_path(L: int, gamma_end: float = DEFAULT_GAMMA_END, n_steps: int = DEFAULT_N_STEPS) -> SnrPath:
    """gamma_i(t) = t for every token, discretized at n_steps+1 uniform knots."""
    if L < 1 or gamma_end <= 0 or n_steps < 1:
        raise InvalidPathError("need L >= 1, gamma_end > 0, n_steps >= 1")
    t = np.linspace(0.0, gamma_end, n_steps + 1)
    return SnrPath(t, np.repeat(t[:, None], L, axis=1))


def ar_path(L: int, focus: int, gamma_end: float = DEFAULT_GAMMA_END) -> ArPathSpec:
    return ArPathSpec(L, focus, gamma_end)


def simulate_conditional(
    x: np.ndarray,
    path: SnrPath,
    seed: int,
    emb: EmbeddingTable,
) -> Trajectory:
    """Exact-increment simulation of the conditional SDE for a fixed sequence.

    Between knots, dz_i ~ Normal(dgamma_i * x_i, dgamma_i * I), so the terminal
    state has the closed-form marginal z_i = gamma_i x_i + sqrt(gamma_i) eps_i
    with no discretization error.
    """
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (path.n_tokens,):
        raise InvalidVocabError(f"token sequence must have shape ({path.n_tokens},)")
    if x.min() < 0 or x.max() >= emb.vocab.size:
        raise InvalidVocabError("token id out of vocabulary range")
    xe = emb.encode(x)  # (L, d)
    rng = child_rng(seed)
    dgamma = np.diff(path.knots_gamma, axis=0)  # (n, L)
    states = np.empty((path.n_steps + 1, path.n_tokens, emb.dim))
    states[0] = 0.0
    for k in range(path.n_steps):
        dg = dgamma[k][:, None]
        noise = rng.standard_normal(xe.shape)
        states[k + 1] = states[k] + dg * xe + np.sqrt(dg) * noise
    return Trajectory(path.knots_t.copy(), states)


def simulate_unconditional(
    path: SnrPath,
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
    seed: int,
    chain: int = 0,
) -> Trajectory:
    """Euler-Maruyama simulation of the generative SDE from z = 0.

    Chain ``c`` draws from the (seed, c) child stream, matching the batched
    simulator chain for chain.
    """
    den = ExactDenoiser(data, emb)
    rng = child_rng(seed, chain)
    dgamma = np.diff(path.knots_gamma, axis=0)
    states = np.empty((path.n_steps + 1, path.n_tokens, emb.dim))
    states[0] = 0.0
    z = states[0].copy()
    for k in range(path.n_steps):
        dg = dgamma[k][:, None]
        z = z + dg * den.denoise(z) + np.sqrt(dg) * rng.standard_normal(z.shape)
        states[k + 1] = z
    return Trajectory(path.knots_t.copy(), states)


def decode(z: np.ndarray, data: EmpiricalDistribution, emb: EmbeddingTable) -> np.ndarray:
    """Per-position argmax of the exact token marginals; ties -> smallest id."""
    marg = ExactDenoiser(data, emb).token_marginals(z)
    return np.argmax(marg, axis=-1)


@dataclass(frozen=True)
class SampleCounts:
    """Decoded-sequence counts from a batch of generative chains."""

    counts: dict[tuple[int, ...], int]
    n_chains: int

    def tv_to(self, data: EmpiricalDistribution) -> float:
        """Total-variation distance between the sample frequencies and P(x)."""
        support = {tuple(s): w for s, w in zip(data.sequences, data.weights)}
        keys = set(support) | set(self.counts)
        return 0.5 * sum(
            abs(self.counts.get(k, 0) / self.n_chains - support.get(k, 0.0))
            for k in keys
        )

    def valid_fraction(self, data: EmpiricalDistribution) -> float:
        support = {tuple(s) for s in data.sequences}
        hits = sum(c for k, c in self.counts.items() if k in support)
        return hits / self.n_chains


def simulate_unconditional_batch(
    path: SnrPath,
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
    seed: int,
    n_chains: int,
    record_gammas: tuple[float, ...] = (),
    block_size: int = 1024,
):
    """Batched generative simulation with per-chain seed streams.

    Chain ``c`` draws its noise from ``child_rng(seed, c)``, so results are
    independent of ``block_size`` and identical under any parallel split.
    Returns (terminal states (n_chains, L, d), {gamma: states at that level}).
    """
    if n_chains < 1:
        raise InvalidPathError("need n_chains >= 1")
    den = ExactDenoiser(data, emb)
    L, d = path.n_tokens, emb.dim
    dgamma = np.diff(path.knots_gamma, axis=0)
    n_steps = dgamma.shape[0]

    # map requested gamma levels to the knot reaching them first (diagonal paths)
    record_steps: dict[float, int] = {}
    for g in record_gammas:
        per_token = path.knots_gamma.min(axis=1)
        idx = int(np.argmin(np.abs(per_token - g)))
        record_steps[g] = idx

    terminal = np.empty((n_chains, L, d))
    snapshots = {g: np.empty((n_chains, L, d)) for g in record_gammas}
    for start in range(0, n_chains, block_size):
        stop = min(start + block_size, n_chains)
        noise = np.stack(
            [child_rng(seed, c).standard_normal((n_steps, L, d)) for c in range(start, stop)]
        )
        z = np.zeros((stop - start, L, d))
        for g, idx in record_steps.items():
            if idx == 0:
                snapshots[g][start:stop] = z
        for k in range(n_steps):
            dg = dgamma[k][:, None]
            drift = den.denoise(z)
            z = z + dg * drift + np.sqrt(dg) * noise[:, k]
            for g, idx in record_steps.items():
                if idx == k + 1:
                    snapshots[g][start:stop] = z
        terminal[start:stop] = z
    return terminal, snapshots


def sample_batch(
    n_chains: int,
    path: SnrPath,
    data: EmpiricalDistribution,
    emb: EmbeddingTable,
    seed: int,
    block_size: int = 1024,
) -> SampleCounts:
    """Decoded-sequence counts over independent generative chains."""
    terminal, _ = simulate_unconditional_batch(
        path, data, emb, seed, n_chains, block_size=block_size
    )
    decoded = decode(terminal, data, emb)
    counts: dict[tuple[int, ...], int] = {}
    for row in decoded:
        key = tuple(int(v) for v in row)
        counts[key] = counts.get(key, 0) + 1
    return SampleCounts(counts, n_chains)


def trajectory_to_rows(traj: Trajectory, chain: int = 0) -> list[tuple]:
    """Flatten a trajectory to (chain, step, t, token, z components...) rows."""
    rows = []
    for k, (t, state) in enumerate(zip(traj.times, traj.states)):
        for i, zi in enumerate(state):
            rows.append((chain, k, float(t), i, *[float(v) for v in zi]))
    return rows
