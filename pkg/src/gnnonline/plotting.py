"""Static figures of accuracy curves per dataset and setting."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import CurveSummary  # noqa: E402

FIGURE_RC = {
    "font.size": 8,
    "axes.labelsize": 8,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "lines.linewidth": 1.2,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
    "pdf.fonttype": 42,
    "svg.fonttype": "none",
}

MODEL_COLORS = {
    "gcn": "#1f77b4",
    "gcn64": "#17becf",
    "sage": "#2ca02c",
    "gat": "#d62728",
    "mlp": "#7f7f7f",
}
MODEL_LABELS = {"gcn": "GCN", "gcn64": "GCN-64", "sage": "GraphSAGE", "gat": "GAT", "mlp": "MLP"}


def figsize(columns: int, rows: int, width_per_panel=2.6, aspect=0.75):
    return (columns * width_per_panel, rows * width_per_panel * aspect)


def draw_panel(ax, curves: Mapping[tuple[str, int], CurveSummary], title: str = "", band_alpha=0.15):
    """One axis: mean line per (model, pretrain epochs) with a +-1 std band.

    Pretrained runs are dashed, runs from scratch solid.
    """
    for (model, pretrain), s in sorted(curves.items()):
        x = np.arange(s.epochs)
        color = MODEL_COLORS.get(model, "k")
        style = "--" if pretrain else "-"
        label = MODEL_LABELS.get(model, model) + (f" ({pretrain} pretrain)" if pretrain else "")
        ax.plot(x, s.mean, linestyle=style, color=color, label=label)
        ax.fill_between(x, s.mean - s.std, s.mean + s.std, color=color, alpha=band_alpha, linewidth=0)
    ax.set_title(title)
    ax.set_xlabel("inference epoch")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(axis="y", alpha=0.2, linewidth=0.6)


def plot_curve_grid(panels: Mapping[tuple[str, str], Mapping[tuple[str, int], CurveSummary]],
                    path, datasets=None, settings=("A", "B")):
    """Setting A on the top row, B on the bottom, one column per dataset."""
    if not panels:
        raise ValueError("no curves to plot")
    if datasets is None:
        datasets = sorted({d for d, _ in panels})
    settings = [s for s in settings if any((d, s) in panels for d in datasets)]
    path = Path(path)
    with plt.rc_context(FIGURE_RC):
        fig, axes = plt.subplots(len(settings), len(datasets), squeeze=False,
                                 figsize=figsize(len(datasets), len(settings)))
        for i, setting in enumerate(settings):
            for j, dataset in enumerate(datasets):
                ax = axes[i][j]
                curves = panels.get((dataset, setting))
                if not curves:
                    ax.set_axis_off()
                    continue
                draw_panel(ax, curves, title=f"{dataset.capitalize()}-{setting}")
        handles, labels = [], []
        for ax in axes.flat:
            for h, lab in zip(*ax.get_legend_handles_labels()):
                if lab not in labels:
                    handles.append(h)
                    labels.append(lab)
        fig.legend(handles, labels, loc="lower center", ncol=min(5, len(labels)), frameon=False,
                   bbox_to_anchor=(0.5, -0.02 - 0.03 * ((len(labels) - 1) // 5)))
        fig.tight_layout(rect=(0, 0.06, 1, 1))
        fig.savefig(path)
        plt.close(fig)
    return path
