"""Matplotlib figures written next to the tabular reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from juris.features import FEATURE_LABELS, FEATURE_ORDER  # noqa: E402
from juris.metrics import MetricsReport  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 150,
}


def _save(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_data_efficiency(rows: Sequence[tuple[float, MetricsReport]], path: str | Path) -> None:
    """Metric trends across training-data ratios; recall on a secondary axis."""
    ratios = [100 * r for r, _ in rows]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.8, 3.0))
        for metric, marker in (("MAP", "o"), ("P@3", "s"), ("Hits@5", "^"), ("MRR@5", "D")):
            ax.plot(ratios, [100 * rep.mean[metric] for _, rep in rows], marker=marker, label=metric)
        ax.set_xlabel("training data (%)")
        ax.set_ylabel("score (%)")
        right = ax.twinx()
        right.plot(ratios, [100 * rep.mean["R@5"] for _, rep in rows], "--", color="purple",
                   marker="x", label="R@5")
        right.set_ylabel("R@5 (%)")
        right.spines["right"].set_visible(True)
        lines = ax.get_lines() + right.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="lower right", ncol=2)
        ax.set_xticks(ratios)
        _save(fig, path)


def plot_importance(importance: Mapping[str, float], path: str | Path) -> None:
    """Horizontal bars of mean |Shapley value| per feature, largest on top."""
    order = sorted(FEATURE_ORDER, key=lambda f: importance[f])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 2.6))
        ax.barh([FEATURE_LABELS[f] for f in order], [importance[f] for f in order], color="#3b75af")
        ax.set_xlabel("mean |Shapley value|")
        _save(fig, path)


def plot_ablation(reports: Mapping[str, MetricsReport], path: str | Path, metric: str = "MAP") -> None:
    names = list(reports)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.0))
        values = [100 * reports[n].mean[metric] for n in names]
        ax.bar(range(len(names)), values, color=["#c44e52" if n == "full" else "#8c8c8c" for n in names])
        ax.set_xticks(range(len(names)), names, rotation=35, ha="right")
        ax.set_ylabel(f"{metric} (%)")
        _save(fig, path)
