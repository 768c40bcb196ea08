"""Report figures rendered next to the delimited CLI output.

Uses the Agg backend so figures render headless; every function writes a
single PNG and returns the path it wrote.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analyzer import CostReport
from .bench import BenchReport
from .metrics import SegScores


def save_cost_figure(report: CostReport, path: str | Path) -> Path:
    """Per-layer params and MACs bars for the conv-family layers."""
    layers = [l for l in report.layers if l.kind in ("conv", "depthwise", "pointwise")]
    names = [l.layer_path for l in layers]
    y = np.arange(len(layers))

    fig, (ax_p, ax_m) = plt.subplots(1, 2, figsize=(11, max(4, 0.28 * len(layers))), sharey=True)
    ax_p.barh(y, [l.params / 1e3 for l in layers], color="#4878cf")
    ax_p.set_xlabel("params (K)")
    ax_m.barh(y, [l.macs / 1e6 for l in layers], color="#d65f5f")
    ax_m.set_xlabel("MACs (M)")
    ax_p.set_yticks(y, names, fontsize=7)
    ax_p.invert_yaxis()
    for ax in (ax_p, ax_m):
        ax.grid(axis="x", alpha=0.3)
    fig.suptitle(
        f"{report.total_params / 1e6:.3f} M params, {report.total_macs / 1e9:.3f} G MACs "
        f"at {report.input_size[0]}x{report.input_size[1]}"
    )
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_bench_figure(report: BenchReport, path: str | Path) -> Path:
    """Per-iteration latency trace plus its histogram, with p50/p95 markers."""
    times = np.asarray(report.per_iter_ms)
    fig, (ax_t, ax_h) = plt.subplots(1, 2, figsize=(10, 4))
    ax_t.plot(times, lw=0.9, color="#4878cf")
    ax_t.axhline(report.p50_ms, color="#555555", ls="--", lw=0.8, label=f"p50 {report.p50_ms:.2f} ms")
    ax_t.axhline(report.p95_ms, color="#d65f5f", ls="--", lw=0.8, label=f"p95 {report.p95_ms:.2f} ms")
    ax_t.set_xlabel("iteration")
    ax_t.set_ylabel("latency (ms)")
    ax_t.legend(fontsize=8)
    ax_t.grid(alpha=0.3)
    ax_h.hist(times, bins=min(30, max(5, len(times) // 4)), color="#6acc65", edgecolor="white")
    ax_h.set_xlabel("latency (ms)")
    ax_h.set_ylabel("count")
    fig.suptitle(
        f"{report.fps:.2f} FPS, mean {report.mean_ms:.2f} ms, "
        f"{report.threads} thread(s), {report.input_size[0]}x{report.input_size[1]}"
    )
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_eval_figure(scores: SegScores, path: str | Path) -> Path:
    """Per-image Dice/IoU distributions and their scatter."""
    dice = np.asarray([d for _, d, _ in scores.per_image])
    iou = np.asarray([i for _, _, i in scores.per_image])
    fig, (ax_h, ax_s) = plt.subplots(1, 2, figsize=(10, 4))
    bins = np.linspace(0.0, 1.0, 21)
    ax_h.hist(dice, bins=bins, alpha=0.6, label="dice", color="#4878cf")
    ax_h.hist(iou, bins=bins, alpha=0.6, label="iou", color="#d65f5f")
    ax_h.set_xlabel("score")
    ax_h.set_ylabel("images")
    ax_h.legend(fontsize=8)
    ax_s.scatter(dice, iou, s=12, alpha=0.6, color="#4878cf")
    ax_s.plot([0, 1], [0, 1], color="#888888", lw=0.8, ls="--")
    ax_s.set_xlabel("dice")
    ax_s.set_ylabel("iou")
    ax_s.set_xlim(0, 1)
    ax_s.set_ylim(0, 1)
    fig.suptitle(f"mean dice {scores.dice:.4f}, mean iou {scores.iou:.4f}, n={len(dice)}")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
