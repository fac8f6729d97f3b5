"""Figures for benchmark reports."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

if TYPE_CHECKING:
    from deltamv.bench import BenchReport


def plot_speedups(report: "BenchReport", path: str | Path) -> Path:
    """Grouped bars of speedup per view and batch, log scale, with the break-even line."""
    path = Path(path)
    views = list(dict.fromkeys(e.mv for e in report.entries))
    batches = sorted({e.batch for e in report.entries})
    width = 0.8 / max(1, len(batches))
    fig, ax = plt.subplots(figsize=(7.5, 4))
    for j, b in enumerate(batches):
        xs, ys, colors = [], [], []
        for i, mv in enumerate(views):
            e = next((e for e in report.entries if e.mv == mv and e.batch == b), None)
            if e is None:
                continue
            xs.append(i + (j - (len(batches) - 1) / 2) * width)
            ys.append(max(e.speedup, 1e-3))
            colors.append("tab:gray" if e.strategy == "full_recompute" else "tab:blue")
        bars = ax.bar(xs, ys, width * 0.95, color=colors, edgecolor="black", linewidth=0.5)
        for bar, y in zip(bars, ys):
            ax.annotate(f"{y:.2f}x", (bar.get_x() + bar.get_width() / 2, y), ha="center", va="bottom", fontsize=7)
    ax.axhline(1.0, color="tab:red", linestyle="--", linewidth=1)
    ax.set_yscale("log")
    ax.set_xticks(range(len(views)))
    ax.set_xticklabels(views, fontsize=8)
    ax.set_ylabel("speedup (full time / incremental time)")
    ok, n = report.accuracy()
    ax.set_title(f"{report.scale} scale, batches {', '.join(map(str, batches))}; cost model right on {ok}/{n} views", fontsize=9)
    handles = [
        plt.Rectangle((0, 0), 1, 1, color="tab:blue"),
        plt.Rectangle((0, 0), 1, 1, color="tab:gray"),
    ]
    ax.legend(handles, ["model chose incremental", "model chose full recompute"], fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
