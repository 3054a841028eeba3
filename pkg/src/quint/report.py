"""Figure rendering for the reporting path.

Every figure is written to file next to the delimited output it illustrates,
using the Agg backend so rendering is headless and byte-deterministic for
identical inputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .features import PrevalenceReport


def save_prevalence_figure(report: PrevalenceReport, path) -> None:
    """Grouped horizontal bars of per-pattern prevalence in both cohorts."""
    ids = report.pattern_ids + ["any pattern"]
    pos = [report.positive_prevalence(i) for i in range(len(report.pattern_ids))]
    pos.append(report.aggregate_positive_prevalence)
    neg = [report.negative_prevalence(i) for i in range(len(report.pattern_ids))]
    neg.append(report.aggregate_negative_prevalence)

    y = np.arange(len(ids))
    height = max(2.5, 0.28 * len(ids) + 1.2)
    fig, ax = plt.subplots(figsize=(7.5, height), dpi=120)
    ax.barh(y + 0.18, pos, height=0.34, label="positive cohort", color="#c23b22")
    ax.barh(y - 0.18, neg, height=0.34, label="negative cohort", color="#3b7dc2")
    ax.set_yticks(y)
    ax.set_yticklabels(ids, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlim(0, 1.0)
    ax.set_xlabel("prevalence")
    ax.set_title("Pattern prevalence by cohort")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="png")
    plt.close(fig)


def save_trace_figure(trace, path) -> None:
    """Expected complete log-likelihood across EM iterations."""
    fig, ax = plt.subplots(figsize=(6, 3.5), dpi=120)
    ax.plot(range(1, len(trace) + 1), trace, marker="o", markersize=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("Q")
    ax.set_title("EM objective trace")
    fig.tight_layout()
    fig.savefig(path, format="png")
    plt.close(fig)


def save_similarity_figure(matrix: np.ndarray, path) -> None:
    """Heatmap of the cohort similarity matrix."""
    fig, ax = plt.subplots(figsize=(5.5, 5), dpi=120)
    image = ax.imshow(matrix, cmap="viridis", vmin=0.0, interpolation="nearest")
    fig.colorbar(image, ax=ax, shrink=0.85, label="similarity")
    ax.set_xlabel("object index")
    ax.set_ylabel("object index")
    ax.set_title("Cohort similarity")
    fig.tight_layout()
    fig.savefig(path, format="png")
    plt.close(fig)
