"""Matplotlib figure rendering for the CLI report paths.

Every function takes already-computed report data and writes a single PNG
next to the delimited output.  Rendering uses the Agg backend and fixed
metadata so repeated runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_METADATA = {"Software": "snrlab"}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_METADATA)
    plt.close(fig)


def save_sample_histogram(labels, observed, exact, path) -> None:
    """Decoded-sequence frequencies against the exact distribution."""
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(labels)), 4))
    ax.bar(x - 0.2, observed, width=0.4, label="observed")
    ax.bar(x + 0.2, exact, width=0.4, label="exact")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_ylabel("probability")
    ax.set_title("decoded samples vs exact distribution")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_error_field(grid, E, path) -> None:
    """Per-token expected squared denoising error along the SNR grid."""
    E = np.asarray(E)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(E.shape[1]):
        ax.plot(grid, E[:, i], label=f"token {i}")
    ax.set_xlabel("snr")
    ax.set_ylabel("expected squared error")
    ax.set_xscale("symlog", linthresh=0.01)
    ax.set_title("denoising error field")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def save_refine_heatmap(drafts, mask_id, path) -> None:
    """Draft evolution over refinement steps; masks rendered as the top row value."""
    drafts = np.asarray(drafts)
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(drafts.T, aspect="auto", interpolation="nearest", cmap="viridis",
                   vmin=0, vmax=mask_id)
    ax.set_xlabel("step")
    ax.set_ylabel("position")
    ax.set_title("draft evolution (mask = brightest)")
    fig.colorbar(im, ax=ax, label="token id")
    fig.tight_layout()
    _save(fig, path)


def save_step_diagnostics(diags, path) -> None:
    """u_t, H_t, k_t, r_t and Delta_t against normalized time."""
    t = [d.t for d in diags]
    fig, axes = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    axes[0].plot(t, [d.u for d in diags], label="u (residual uncertainty)")
    axes[0].plot(t, [d.H for d in diags], label="H (entropy, nats)")
    axes[0].plot(t, [d.k for d in diags], label="k (nucleus size)")
    axes[0].legend(fontsize=8)
    axes[1].plot(t, [d.r for d in diags], label="r (remask ratio)")
    axes[1].plot(t, [d.delta for d in diags], label="Delta (change rate)")
    axes[1].set_xlabel("normalized time t")
    axes[1].legend(fontsize=8)
    axes[0].invert_xaxis()
    fig.suptitle("refinement diagnostics")
    fig.tight_layout()
    _save(fig, path)


def save_gamma_histogram(gamma, bins, path) -> None:
    """Histogram of sampled per-token SNRs (log-scaled counts)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(gamma, bins=bins)
    ax.set_xlabel("snr")
    ax.set_ylabel("count")
    ax.set_yscale("log")
    ax.set_title("mixed-corruption SNR draw")
    fig.tight_layout()
    _save(fig, path)


def save_loss_curve(trace, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(trace)), trace)
    ax.set_xlabel("iteration")
    ax.set_ylabel("cross-entropy")
    ax.set_title("converter training loss")
    fig.tight_layout()
    _save(fig, path)


def save_reliability(reports, path) -> None:
    """Reliability curves (accuracy vs confidence) for labelled reports."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], "k--", linewidth=1, label="ideal")
    for label, rep in reports:
        keep = rep.bin_count > 0
        ax.plot(rep.bin_confidence[keep], rep.bin_accuracy[keep], "o-",
                label=f"{label} (ECE {rep.ece:.4f})")
    ax.set_xlabel("mean confidence")
    ax.set_ylabel("empirical accuracy")
    ax.set_title("reliability")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
