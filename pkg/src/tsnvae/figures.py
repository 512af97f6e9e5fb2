"""Matplotlib report figures, rendered next to the delimited outputs.

Everything draws through the Agg backend so the CLI works headless.  These
figures are for human inspection; the byte-reproducible artifact is the SVG
latent map from :mod:`tsnvae.evalvis`.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evalvis import BenchmarkReport, LatentMap

__all__ = ["latent_map_figure", "loss_curve_figure", "benchmark_figure"]

_RC = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _marker_colors(truths: np.ndarray) -> np.ndarray:
    """Hue tracks truth X (red to green), saturation tracks truth Y."""
    lo = truths.min(axis=0)
    span = np.maximum(truths.max(axis=0) - lo, 1e-12)
    n = (truths - lo) / span
    hsv = np.stack([n[:, 0] * (1 / 3), 0.25 + 0.75 * n[:, 1], np.full(len(n), 0.85)], axis=1)
    return matplotlib.colors.hsv_to_rgb(hsv)


def latent_map_figure(lmap: LatentMap, path) -> None:
    """Latent scatter plus the two latent-vs-physical correlation panels."""
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4))
        ax = axes[0]
        ax.scatter(lmap.latents[:, 0], lmap.latents[:, 1], s=8,
                   c=_marker_colors(lmap.truths), linewidths=0)
        if len(lmap.goal_latents):
            ax.scatter(lmap.goal_latents[:, 0], lmap.goal_latents[:, 1], s=60,
                       marker="*", c="#1f4fd8", edgecolors="#10307e", linewidths=0.5,
                       label="predicted insertion", zorder=3)
            ax.legend(loc="upper right", fontsize=7)
        ax.set_xlabel("latent dimension 1 [m]")
        ax.set_ylabel("latent dimension 2 [m]")
        ax.set_title("latent map")

        for i, ax in enumerate(axes[1:]):
            y = lmap.signs[i] * lmap.latents[:, lmap.permutation[i]]
            t = lmap.truths[:, i]
            ax.scatter(t, y, s=6, c=_marker_colors(lmap.truths), linewidths=0)
            ax.set_xlabel(f"physical {'XY'[i]} [m]")
            ax.set_ylabel(f"latent axis {lmap.permutation[i] + 1}")
            ax.set_title(f"r = {lmap.pearson_r[i]:+.3f}, slope = {lmap.slopes[i]:+.2f}")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def loss_curve_figure(losses: np.ndarray, path, title: str = "training loss") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.2))
        losses = np.asarray(losses)
        ax.plot(np.arange(losses.size), losses, lw=0.8)
        if losses.size and losses.min() > 0:
            ax.set_yscale("log")
        ax.set_xlabel("training step")
        ax.set_ylabel("loss")
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def benchmark_figure(report: BenchmarkReport, path) -> None:
    """Success rates and mean errors per method, one panel each."""
    with plt.rc_context(_RC):
        names = [m.method for m in report.methods]
        rates = [100 * m.success_rate for m in report.methods]
        errs = [1000 * m.mean_error for m in report.methods]
        stds = [1000 * m.std_error for m in report.methods]
        fig, axes = plt.subplots(1, 2, figsize=(10.0, 0.8 + 0.42 * len(names)))
        ypos = np.arange(len(names))
        axes[0].barh(ypos, rates, color="#4878a8")
        axes[0].set_yticks(ypos, names, fontsize=8)
        axes[0].invert_yaxis()
        axes[0].set_xlabel("success rate [%]")
        axes[0].set_xlim(0, 100)
        axes[1].barh(ypos, errs, xerr=stds, color="#a85448", error_kw={"lw": 0.8})
        axes[1].set_yticks(ypos, ["" for _ in names])
        axes[1].invert_yaxis()
        axes[1].set_xlabel("mean final error [mm]")
        axes[1].set_xscale("log")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
