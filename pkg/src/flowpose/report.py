"""Figures written next to the CSV reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamp or version strings, so reruns give identical files
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_eval_report(rows, path, title: str = "Centroid distance per part"):
    """Horizontal bars of mean distance; missing pairs drawn as hatched stubs."""
    labels = [f"part {r.part} / {r.joint}" for r in rows]
    means = [r.mean_distance if r.mean_distance is not None else 0.0 for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 0.45 * max(len(rows), 1) + 1.2))
    y = np.arange(len(rows))
    bars = ax.barh(y, means, color="#4c72b0")
    for bar, r in zip(bars, rows):
        if r.mean_distance is None:
            bar.set_hatch("//")
            bar.set_facecolor("none")
            ax.text(0.0, bar.get_y() + bar.get_height() / 2, " missing", va="center", fontsize=8)
        else:
            ax.text(bar.get_width(), bar.get_y() + bar.get_height() / 2, f" {r.mean_distance:.2f} (n={r.count})",
                    va="center", fontsize=8)
    ax.set_yticks(y)
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlabel("mean Euclidean distance (px)")
    ax.set_title(title)
    top = max(means) if means and max(means) > 0 else 1.0
    ax.set_xlim(0, top * 1.35)
    fig.tight_layout()
    return _save(fig, path)


def plot_mining(scores, selected_mask, path, title: str = "Error scores"):
    scores = np.asarray(scores, dtype=float)
    selected_mask = np.asarray(selected_mask, dtype=bool)
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    bins = np.linspace(0.0, 1.0, 21)
    ax.hist([scores[~selected_mask], scores[selected_mask]], bins=bins, stacked=True,
            color=["#bbbbbb", "#c44e52"], label=["kept out", "selected"])
    ax.set_xlabel("disagreement rate")
    ax.set_ylabel("samples")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_label_map(label_map, path, frame=None):
    """Label map over the frame (if given), one colour per part."""
    fig, ax = plt.subplots(figsize=(4.0, 4.0 * label_map.height / label_map.width))
    if frame is not None:
        ax.imshow(frame.luma, cmap="gray", vmin=0.0, vmax=1.0)
    masked = np.ma.masked_equal(label_map.labels, 0)
    ax.imshow(masked, cmap="viridis", vmin=1, vmax=max(label_map.k, 2), alpha=0.6, interpolation="nearest")
    ax.set_axis_off()
    fig.tight_layout()
    return _save(fig, path)
