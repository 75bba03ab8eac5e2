"""Matplotlib figures for chain trajectories and road posteriors (files only, Agg backend)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import GPGPIOError  # noqa: E402


def _save(fig, path):
    try:
        fig.savefig(path, dpi=100)
    except OSError as exc:
        raise GPGPIOError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def plot_text_trajectories(diagnostics, path):
    """Log probability, active letter count and per-letter blur for each chain."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    for c, diag in enumerate(diagnostics):
        steps = np.asarray(diag.step)
        logp = np.asarray(diag.log_prior) + np.asarray(diag.log_likelihood)
        axes[0].plot(steps, logp, lw=1, label=f"chain {c}")
        if "n_present" in diag.extras:
            axes[1].step(steps, diag.extras["n_present"], where="post", lw=1)
        for name, col in diag.extras.items():
            if name.startswith("blur_"):
                axes[2].plot(steps, col, lw=0.6, color=f"C{c}", alpha=0.7)
    axes[0].set_title("log probability")
    axes[1].set_title("active letters")
    axes[2].set_title("per-letter blur")
    for ax in axes:
        ax.set_xlabel("step")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_road_posterior(rows, path, field="lane_pos_x"):
    """Histogram of one scene variable over posterior samples, split by frame."""
    frames = sorted({r["frame"] for r in rows})
    fig, ax = plt.subplots(figsize=(5, 3.4))
    values = [[r[field] for r in rows if r["frame"] == f] for f in frames]
    lo = min((min(v) for v in values if v), default=0.0)
    hi = max((max(v) for v in values if v), default=1.0)
    if math.isclose(lo, hi):
        lo, hi = lo - 0.5, hi + 0.5
    bins = np.linspace(lo, hi, 21)
    for f, v in zip(frames, values):
        ax.hist(v, bins=bins, alpha=0.6, label=str(f))
    ax.set_xlabel(field)
    ax.set_ylabel("samples")
    if len(frames) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
