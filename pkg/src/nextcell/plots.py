"""Figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["axes.grid"] = True
plt.rcParams["figure.autolayout"] = True
plt.rcParams["legend.fontsize"] = "small"

LABEL_NAMES = {1: "N", 2: "E", 3: "S", 4: "W"}


def _name(label):
    return f"cell {label} ({LABEL_NAMES[label]})" if label in LABEL_NAMES else f"cell {label}"


def accuracy_vs_ratio(report, file, baseline=None, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ratios = report.ratios
    for lab in report.labels:
        xs = [r for r in ratios if (r, lab) in report.counts]
        ax.plot(xs, [report.recall(r, lab) for r in xs], marker="o", ms=3, label=_name(lab))
    if baseline is not None:
        bx = baseline.ratios
        ax.plot(bx, [baseline.overall(r) for r in bx], "k--", marker="s", ms=3,
                label="handover history")
    ax.set_xlabel("sample length ratio")
    ax.set_ylabel("prediction accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_xlim(0, 1.02)
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="lower right")
    fig.savefig(file, dpi=150)
    plt.close(fig)


def accuracy_vs_time(series, file, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    for lab, pts in sorted(series.items()):
        if pts:
            t, a = zip(*pts)
            ax.plot(t, a, lw=1, label=_name(lab))
    ax.set_xlabel("simulated time [s]")
    ax.set_ylabel("windowed prediction accuracy")
    ax.set_ylim(0, 1.05)
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="lower right")
    fig.savefig(file, dpi=150)
    plt.close(fig)
