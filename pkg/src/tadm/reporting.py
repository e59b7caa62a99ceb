"""Figure rendering for training logs, evaluation reports, and ablations.

Everything renders through the Agg backend straight to PNG files next to
the CSV outputs; no display is ever required.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError


def read_log(path: str):
    """Parse a training log CSV into (steps, loss_dml, loss_bae) arrays."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "step,loss_dml,loss_bae":
        raise DataError(f"{path}: not a training log")
    rows = [line.split(",") for line in lines[1:] if line]
    steps = np.array([int(r[0]) for r in rows])
    return steps, np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows])


def _smooth(y: np.ndarray, window: int = 50) -> np.ndarray:
    if len(y) < 2 * window:
        return y
    kernel = np.ones(window) / window
    return np.convolve(y, kernel, mode="valid")


def loss_figure(log_path: str, out_png: str) -> None:
    steps, dml, bae = read_log(log_path)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, dml, color="#1f77b4", alpha=0.25, lw=0.8)
    sm = _smooth(dml)
    ax.plot(steps[len(steps) - len(sm):], sm, color="#1f77b4", label="noise MSE")
    ax.set_xlabel("step")
    ax.set_ylabel("noise MSE", color="#1f77b4")
    ax.set_yscale("log")
    if np.any(bae > 0):
        ax2 = ax.twinx()
        sb = _smooth(bae)
        ax2.plot(steps[len(steps) - len(sb):], sb, color="#d62728", label="age-gap loss")
        ax2.set_ylabel("age-gap loss (years^2)", color="#d62728")
        ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def eval_figure(report, out_png: str) -> None:
    """Histograms of per-pair SSIM and total-brain error from an EvalReport."""
    ssims = [r["ssim"] for r in report.rows]
    tbe = [r["total_brain_err"] for r in report.rows]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].hist(ssims, bins=20, color="#1f77b4")
    axes[0].axvline(report.aggregate["ssim"], color="k", ls="--", lw=1)
    axes[0].set_xlabel("SSIM")
    axes[0].set_ylabel("pairs")
    axes[1].hist(tbe, bins=20, color="#d62728")
    axes[1].axvline(report.aggregate["total_brain_err"], color="k", ls="--", lw=1)
    axes[1].set_xlabel("total-brain error (%)")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def ablation_figure(table: dict, out_png: str) -> None:
    """Bar chart of mean total-brain error per ablation variant."""
    names = list(table.keys())
    vals = [table[n]["total_brain_err"] for n in names]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, vals, color=["#2ca02c", "#1f77b4", "#ff7f0e", "#d62728"][:len(names)])
    ax.set_ylabel("total-brain error (%)")
    for i, v in enumerate(vals):
        ax.text(i, v, f"{v:.2f}", ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def progression_figure(baseline: np.ndarray, truth: np.ndarray | None,
                       pred: np.ndarray, out_png: str) -> None:
    """Side-by-side baseline / (true follow-up) / prediction / residual."""
    panels = [(baseline, "baseline")]
    if truth is not None:
        panels.append((truth, "true follow-up"))
    panels += [(pred, "prediction"), (pred - baseline, "predicted residual")]
    fig, axes = plt.subplots(1, len(panels), figsize=(2.8 * len(panels), 3))
    for ax, (img, title) in zip(axes, panels):
        span = (-1, 1) if "residual" in title else (0, 1)
        ax.imshow(img, cmap="gray", vmin=span[0], vmax=span[1], interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)
