"""Prevalence reports and classification-ready feature matrices.

A graph matches a discovered pattern when it contains the pattern's label set
(connected) and, for every pattern edge, has an edge on the same directed
endpoints within the relation-distance and weight-slack thresholds. Features
are binary match indicators by default; a recurrence-count variant (minimum
matched edge weight) sits behind a flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .discovery import Candidate
from .graph import InteractionGraph, contains
from .intervals import neighborhood_distance


class DuplicateObjectId(ValueError):
    """Feature matrices require unique object ids."""


def matches(
    graph: InteractionGraph,
    pattern: Candidate,
    d_max: int = 0,
    w_slack: int | None = None,
) -> bool:
    """True iff the pattern's labels are contained in ``graph`` and every
    pattern edge has a counterpart within the thresholds.

    ``d_max`` bounds the neighbourhood distance between relations (0 means
    relation-exact); ``w_slack`` bounds the absolute weight difference
    (None means unbounded).
    """
    if not contains(graph, pattern.labels):
        return False
    edge_map = graph.edge_map()
    for wanted in pattern.subgraph.edges:
        found = False
        for present in edge_map.get((wanted.src, wanted.dst), ()):
            if neighborhood_distance(wanted.relation, present.relation) > d_max:
                continue
            if w_slack is not None and abs(wanted.weight - present.weight) > w_slack:
                continue
            found = True
            break
        if not found:
            return False
    return True


def _match_count(
    graph: InteractionGraph,
    pattern: Candidate,
    d_max: int,
    w_slack: int | None,
) -> int:
    """Recurrence count: the minimum matched edge weight, 0 when unmatched."""
    if not matches(graph, pattern, d_max, w_slack):
        return 0
    edge_map = graph.edge_map()
    floor = None
    for wanted in pattern.subgraph.edges:
        best = None
        for present in edge_map.get((wanted.src, wanted.dst), ()):
            if neighborhood_distance(wanted.relation, present.relation) > d_max:
                continue
            if w_slack is not None and abs(wanted.weight - present.weight) > w_slack:
                continue
            if best is None or present.weight > best:
                best = present.weight
        floor = best if floor is None else min(floor, best)
    return int(floor or 0)


@dataclass
class PrevalenceReport:
    pattern_ids: list[str]
    positive_counts: list[int]
    negative_counts: list[int]
    n_positive: int
    n_negative: int
    aggregate_positive: int
    aggregate_negative: int

    def positive_prevalence(self, i: int) -> float:
        return self.positive_counts[i] / self.n_positive

    def negative_prevalence(self, i: int) -> float:
        return self.negative_counts[i] / self.n_negative

    @property
    def aggregate_positive_prevalence(self) -> float:
        """Fraction of positives matching at least one pattern."""
        return self.aggregate_positive / self.n_positive

    @property
    def aggregate_negative_prevalence(self) -> float:
        return self.aggregate_negative / self.n_negative

    def to_dict(self) -> dict:
        return {
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "patterns": [
                {
                    "pattern_id": pid,
                    "positive_count": self.positive_counts[i],
                    "negative_count": self.negative_counts[i],
                    "positive_prevalence": self.positive_prevalence(i),
                    "negative_prevalence": self.negative_prevalence(i),
                }
                for i, pid in enumerate(self.pattern_ids)
            ],
            "aggregate": {
                "positive_count": self.aggregate_positive,
                "negative_count": self.aggregate_negative,
                "positive_prevalence": self.aggregate_positive_prevalence,
                "negative_prevalence": self.aggregate_negative_prevalence,
            },
        }

    def save_json(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_dict(), handle, sort_keys=True)
            handle.write("\n")

    def save_csv(self, path) -> None:
        with open(path, "w") as handle:
            handle.write(
                "pattern_id,positive_count,negative_count,"
                "positive_prevalence,negative_prevalence\n"
            )
            for i, pid in enumerate(self.pattern_ids):
                handle.write(
                    f"{pid},{self.positive_counts[i]},{self.negative_counts[i]},"
                    f"{self.positive_prevalence(i)!r},{self.negative_prevalence(i)!r}\n"
                )
            handle.write(
                f"any_pattern,{self.aggregate_positive},{self.aggregate_negative},"
                f"{self.aggregate_positive_prevalence!r},"
                f"{self.aggregate_negative_prevalence!r}\n"
            )

    def table(self) -> str:
        """Human-readable prevalence table."""
        header = f"{'pattern':<14} {'pos %':>8} {'neg %':>8} {'pos n':>6} {'neg n':>6}"
        lines = [header, "-" * len(header)]
        for i, pid in enumerate(self.pattern_ids):
            lines.append(
                f"{pid:<14} {100 * self.positive_prevalence(i):>7.1f}% "
                f"{100 * self.negative_prevalence(i):>7.1f}% "
                f"{self.positive_counts[i]:>6} {self.negative_counts[i]:>6}"
            )
        lines.append(
            f"{'any pattern':<14} {100 * self.aggregate_positive_prevalence:>7.1f}% "
            f"{100 * self.aggregate_negative_prevalence:>7.1f}% "
            f"{self.aggregate_positive:>6} {self.aggregate_negative:>6}"
        )
        return "\n".join(lines)


def prevalence(
    patterns: Sequence[Candidate],
    cohort_pos: Sequence[InteractionGraph],
    cohort_neg: Sequence[InteractionGraph],
    d_max: int = 0,
    w_slack: int | None = None,
) -> PrevalenceReport:
    """Per-pattern match fractions in each cohort plus the any-match aggregate."""
    if not cohort_pos or not cohort_neg:
        raise ValueError("both cohorts must be non-empty")
    pos_counts = []
    neg_counts = []
    pos_any = np.zeros(len(cohort_pos), dtype=bool)
    neg_any = np.zeros(len(cohort_neg), dtype=bool)
    for pattern in patterns:
        pos_hits = np.array(
            [matches(g, pattern, d_max, w_slack) for g in cohort_pos], dtype=bool
        )
        neg_hits = np.array(
            [matches(g, pattern, d_max, w_slack) for g in cohort_neg], dtype=bool
        )
        pos_counts.append(int(pos_hits.sum()))
        neg_counts.append(int(neg_hits.sum()))
        pos_any |= pos_hits
        neg_any |= neg_hits
    return PrevalenceReport(
        pattern_ids=[p.pattern_id for p in patterns],
        positive_counts=pos_counts,
        negative_counts=neg_counts,
        n_positive=len(cohort_pos),
        n_negative=len(cohort_neg),
        aggregate_positive=int(pos_any.sum()),
        aggregate_negative=int(neg_any.sum()),
    )


@dataclass
class FeatureMatrix:
    object_ids: list[str]
    pattern_ids: list[str]
    values: np.ndarray
    labels: np.ndarray | None = None

    def save_csv(self, path) -> None:
        with open(path, "w") as handle:
            header = ["object_id", *self.pattern_ids]
            if self.labels is not None:
                header.append("outcome")
            handle.write(",".join(header) + "\n")
            for i, object_id in enumerate(self.object_ids):
                row = [object_id, *(str(int(v)) for v in self.values[i])]
                if self.labels is not None:
                    row.append(str(int(self.labels[i])))
                handle.write(",".join(row) + "\n")


def featurize(
    cohort: Sequence[InteractionGraph],
    patterns: Sequence[Candidate],
    labels: Sequence[int] | None = None,
    d_max: int = 0,
    w_slack: int | None = None,
    counts: bool = False,
) -> FeatureMatrix:
    """Indicator matrix over (object, pattern); columns follow the lexicon
    manifest order of the patterns' source entries."""
    if not patterns:
        raise ValueError("patterns must be non-empty")
    ids = [g.object_id for g in cohort]
    if len(set(ids)) != len(ids):
        seen = set()
        dupes = sorted({i for i in ids if i in seen or seen.add(i)})
        raise DuplicateObjectId(f"duplicate object ids: {dupes}")
    ordered = sorted(patterns, key=lambda p: (p.entry_index, p.pattern_id))
    values = np.zeros((len(cohort), len(ordered)), dtype=int)
    for j, pattern in enumerate(ordered):
        for i, graph in enumerate(cohort):
            if counts:
                values[i, j] = _match_count(graph, pattern, d_max, w_slack)
            else:
                values[i, j] = int(matches(graph, pattern, d_max, w_slack))
    label_array = None if labels is None else np.asarray(labels, dtype=int)
    return FeatureMatrix([g.object_id for g in cohort],
                         [p.pattern_id for p in ordered], values, label_array)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_logistic(
    x: np.ndarray,
    y: np.ndarray,
    learning_rate: float = 0.5,
    epochs: int = 500,
    l2: float = 1e-3,
) -> np.ndarray:
    """Plain batch gradient descent on the regularized log loss.

    Returns weights of length n_features + 1 (bias last). Deterministic:
    zero-initialized, fixed schedule.
    """
    xb = np.hstack([x.astype(float), np.ones((x.shape[0], 1))])
    w = np.zeros(xb.shape[1])
    yf = y.astype(float)
    for _ in range(epochs):
        p = sigmoid(xb @ w)
        grad = xb.T @ (p - yf) / len(yf) + l2 * w
        w -= learning_rate * grad
    return w


def predict_proba(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    xb = np.hstack([x.astype(float), np.ones((x.shape[0], 1))])
    return sigmoid(xb @ w)


def auroc(y: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUROC with midrank tie handling."""
    y = np.asarray(y, dtype=int)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = ranks[y == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def cross_validated_auroc(
    x: np.ndarray,
    y: np.ndarray,
    folds: int = 5,
    seed: int = 0,
    learning_rate: float = 0.5,
    epochs: int = 500,
    l2: float = 1e-3,
) -> float:
    """Mean AUROC of the logistic baseline over seeded stratified-ish folds."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    scores = []
    for fold in range(folds):
        test_idx = order[fold::folds]
        train_idx = np.setdiff1d(order, test_idx)
        w = fit_logistic(x[train_idx], y[train_idx], learning_rate, epochs, l2)
        scores.append(auroc(y[test_idx], predict_proba(x[test_idx], w)))
    return float(np.mean(scores))
