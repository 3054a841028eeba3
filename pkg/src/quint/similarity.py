"""Edge, subgraph, and whole-graph similarity.

Edge similarity couples relation distance and weight difference:
sim = correspondence * 1 / (distance + |weight delta| + 1), where the
correspondence term is 1 only when both edges join the same directed node
pair. Subgraph similarity at a lexicon entry matches each induced edge of the
first graph to its best counterpart in the second and normalizes by the first
graph's induced edge count; whole-graph similarity averages the defined
positions over the lexicon length.

Normalizing by the first graph's edge count makes the entry and graph scores
asymmetric when the induced edge counts differ. That asymmetry is deliberate
and documented; ``normalization="max"`` gives a symmetric variant.
"""

from __future__ import annotations

from itertools import permutations
from typing import Iterable, Sequence

import numpy as np

from .graph import Edge, InteractionGraph, TemplateLabel
from .intervals import neighborhood_distance
from .lexicon import Lexicon, LexiconEntry, encode, iter_bits


class NotContained(ValueError):
    """Subgraph similarity requires both graphs to contain the entry."""


def edge_similarity(e1: Edge, e2: Edge) -> float:
    """Similarity of two edges in [0, 1]; 1 iff same endpoints, relation,
    and weight."""
    if e1.src != e2.src or e1.dst != e2.dst:
        return 0.0
    d = neighborhood_distance(e1.relation, e2.relation)
    return 1.0 / (d + abs(e1.weight - e2.weight) + 1.0)


_PairKey = tuple[TemplateLabel, TemplateLabel]


def _best_match_sums(
    g1: InteractionGraph, g2: InteractionGraph
) -> tuple[dict[_PairKey, float], dict[_PairKey, int], dict[_PairKey, int]]:
    """Per directed endpoint pair: best-match similarity mass of g1's edges
    against g2's, plus both graphs' parallel edge counts."""
    matched: dict[_PairKey, float] = {}
    count1: dict[_PairKey, int] = {}
    count2: dict[_PairKey, int] = {}
    map2 = g2.edge_map()
    for (src, dst), edges1 in g1.edge_map().items():
        count1[(src, dst)] = len(edges1)
        edges2 = map2.get((src, dst))
        if not edges2:
            continue
        total = 0.0
        for e1 in edges1:
            total += max(edge_similarity(e1, e2) for e2 in edges2)
        matched[(src, dst)] = total
    for key, edges2 in map2.items():
        count2[key] = len(edges2)
    return matched, count1, count2


def _entry_value(
    entry_labels: frozenset[TemplateLabel],
    matched: dict[_PairKey, float],
    count1: dict[_PairKey, int],
    count2: dict[_PairKey, int],
    normalization: str,
) -> float:
    if len(entry_labels) == 1:
        return 1.0
    total = 0.0
    edges1 = 0
    edges2 = 0
    for key in permutations(sorted(entry_labels), 2):
        total += matched.get(key, 0.0)
        edges1 += count1.get(key, 0)
        edges2 += count2.get(key, 0)
    denom = max(edges1, edges2) if normalization == "max" else edges1
    if denom == 0:
        return 0.0
    return total / denom


def subgraph_similarity(
    g1: InteractionGraph,
    g2: InteractionGraph,
    entry: LexiconEntry,
    normalization: str = "g1",
) -> float:
    """Similarity of the two graphs' induced subgraphs at one lexicon entry."""
    from .graph import contains

    if not contains(g1, entry.labels):
        raise NotContained(f"graph {g1.object_id} does not contain entry {entry.index}")
    if not contains(g2, entry.labels):
        raise NotContained(f"graph {g2.object_id} does not contain entry {entry.index}")
    matched, count1, count2 = _best_match_sums(g1, g2)
    return _entry_value(entry.labels, matched, count1, count2, normalization)


def similarity_vector(
    g1: InteractionGraph,
    g2: InteractionGraph,
    lexicon: Lexicon,
    fp1: int | None = None,
    fp2: int | None = None,
    normalization: str = "g1",
) -> dict[int, float]:
    """Per-entry similarities at positions where both fingerprints are set.

    Positions where either bit is 0 are undefined and simply absent; they
    contribute zero to the whole-graph score.
    """
    if fp1 is None:
        fp1 = encode(g1, lexicon)
    if fp2 is None:
        fp2 = encode(g2, lexicon)
    shared = fp1 & fp2
    if not shared:
        return {}
    matched, count1, count2 = _best_match_sums(g1, g2)
    values: dict[int, float] = {}
    for k in iter_bits(shared):
        values[k] = _entry_value(
            lexicon.entries[k].labels, matched, count1, count2, normalization
        )
    return values


def graph_similarity(
    g1: InteractionGraph,
    g2: InteractionGraph,
    lexicon: Lexicon,
    fp1: int | None = None,
    fp2: int | None = None,
    normalization: str = "g1",
) -> float:
    """Normalized sum of the similarity vector; 0 when the lexicon is empty."""
    if lexicon.n == 0:
        return 0.0
    values = similarity_vector(g1, g2, lexicon, fp1, fp2, normalization)
    return sum(values.values()) / lexicon.n


def pairwise_matrix(
    graphs: Sequence[InteractionGraph],
    lexicon: Lexicon,
    fingerprints: Sequence[int] | None = None,
    normalization: str = "g1",
) -> np.ndarray:
    """Dense cohort similarity matrix S[i, j] = similarity(graphs[i], graphs[j]).

    The diagonal is the self-similarity popcount(fingerprint)/n. With the
    default normalization the matrix may be asymmetric.
    """
    if fingerprints is None:
        fingerprints = [encode(g, lexicon) for g in graphs]
    m = len(graphs)
    out = np.zeros((m, m), dtype=float)
    if lexicon.n == 0:
        return out
    for i in range(m):
        out[i, i] = fingerprints[i].bit_count() / lexicon.n
        for j in range(i + 1, m):
            shared = fingerprints[i] & fingerprints[j]
            if not shared:
                continue
            matched_ij, count_i, count_j = _best_match_sums(graphs[i], graphs[j])
            matched_ji, _, _ = _best_match_sums(graphs[j], graphs[i])
            total_ij = 0.0
            total_ji = 0.0
            for k in iter_bits(shared):
                labels = lexicon.entries[k].labels
                total_ij += _entry_value(labels, matched_ij, count_i, count_j, normalization)
                total_ji += _entry_value(labels, matched_ji, count_j, count_i, normalization)
            out[i, j] = total_ij / lexicon.n
            out[j, i] = total_ji / lexicon.n
    return out


def write_matrix_csv(
    matrix: np.ndarray, object_ids: Iterable[str], path
) -> None:
    ids = list(object_ids)
    with open(path, "w") as handle:
        handle.write("object_id," + ",".join(ids) + "\n")
        for i, row_id in enumerate(ids):
            row = ",".join(repr(float(v)) for v in matrix[i])
            handle.write(f"{row_id},{row}\n")
