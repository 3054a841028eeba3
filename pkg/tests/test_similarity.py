import random
from itertools import permutations

import pytest

from quint.abstraction import Gradient, State, Template
from quint.graph import Edge, TemplateLabel, contains, induced_subgraph
from quint.intervals import Relation, neighborhood_distance
from quint.lexicon import build_lexicon, encode
from quint.similarity import (
    NotContained,
    edge_similarity,
    graph_similarity,
    pairwise_matrix,
    similarity_vector,
    subgraph_similarity,
    write_matrix_csv,
)

A = TemplateLabel("va", State.HIGH, Gradient.STABLE)
B = TemplateLabel("vb", State.HIGH, Gradient.STABLE)
C = TemplateLabel("vc", State.LOW, Gradient.INCREASING)


def reference_entry_similarity(g1, g2, entry_labels):
    """Brute-force evaluation straight from the definitions: every edge of
    the first induced subgraph matched to its best counterpart on the same
    directed endpoints, normalized by the first subgraph's edge count."""
    if len(entry_labels) == 1:
        return 1.0
    sub1 = induced_subgraph(g1, entry_labels)
    sub2 = induced_subgraph(g2, entry_labels)
    if not sub1.edges:
        return 0.0
    total = 0.0
    for e1 in sub1.edges:
        best = 0.0
        for e2 in sub2.edges:
            if (e1.src, e1.dst) != (e2.src, e2.dst):
                continue
            d = neighborhood_distance(e1.relation, e2.relation)
            best = max(best, 1.0 / (d + abs(e1.weight - e2.weight) + 1.0))
        total += best
    return total / len(sub1.edges)


def reference_graph_similarity(g1, g2, lexicon):
    """Direct evaluation of the whole-graph score from the definitions."""
    total = 0.0
    for entry in lexicon.entries:
        if contains(g1, entry.labels) and contains(g2, entry.labels):
            total += reference_entry_similarity(g1, g2, entry.labels)
    return total / lexicon.n if lexicon.n else 0.0


def _edge(src, dst, relation, weight):
    return Edge(src, dst, relation, weight)


def _graph(object_id, labels, edges):
    from quint.graph import InteractionGraph

    return InteractionGraph(
        object_id, {label: () for label in sorted(labels)}, sorted(
            edges, key=lambda e: (e.src, e.dst, e.relation.value)
        )
    )


def test_edge_similarity_hand_cases():
    identical = _edge(A, B, Relation.DURING, 2)
    assert edge_similarity(identical, identical) == pytest.approx(1.0, abs=1e-12)
    different_pair = _edge(A, C, Relation.DURING, 2)
    assert edge_similarity(identical, different_pair) == 0.0
    # neighbouring relations, weights 2 vs 3 -> 1 / (1 + 1 + 1)
    neighbor = _edge(A, B, Relation.STARTS, 3)
    assert edge_similarity(
        _edge(A, B, Relation.OVERLAPS, 2), neighbor
    ) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_edge_similarity_symmetric_and_monotone():
    base = _edge(A, B, Relation.OVERLAPS, 3)
    for relation in Relation.__members__.values():
        if relation not in (
            Relation.PRECEDES, Relation.MEETS, Relation.OVERLAPS, Relation.STARTS,
            Relation.DURING, Relation.FINISHES, Relation.EQUALS,
        ):
            continue
        for weight in (1, 2, 3, 5):
            other = _edge(A, B, relation, weight)
            assert edge_similarity(base, other) == edge_similarity(other, base)
    # strictly decreasing in relation distance at fixed weights
    distances = [
        (relation, neighborhood_distance(Relation.OVERLAPS, relation))
        for relation in (Relation.OVERLAPS, Relation.STARTS, Relation.EQUALS)
    ]
    values = [
        edge_similarity(base, _edge(A, B, relation, 3)) for relation, _ in distances
    ]
    assert values[0] > values[1] > values[2]
    # strictly decreasing in weight difference at fixed relation
    weights = [edge_similarity(base, _edge(A, B, Relation.OVERLAPS, w)) for w in (3, 4, 6)]
    assert weights[0] > weights[1] > weights[2]


def test_subgraph_similarity_identical_and_disjoint():
    g1 = _graph("a", [A, B], [_edge(A, B, Relation.DURING, 2)])
    lex = build_lexicon([], 2, restrict_to=[A, B])
    entry = next(e for e in lex.entries if len(e.labels) == 2)
    assert subgraph_similarity(g1, g1, entry) == pytest.approx(1.0, abs=1e-12)
    # same nodes, opposite edge direction: no shared endpoint pair
    g2 = _graph("b", [A, B], [_edge(B, A, Relation.DURING, 2)])
    assert subgraph_similarity(g1, g2, entry) == 0.0


def test_subgraph_similarity_relation_distance_two():
    g1 = _graph("a", [A, B], [_edge(A, B, Relation.DURING, 2)])
    g2 = _graph("b", [A, B], [_edge(A, B, Relation.OVERLAPS, 2)])
    lex = build_lexicon([], 2, restrict_to=[A, B])
    entry = next(e for e in lex.entries if len(e.labels) == 2)
    assert neighborhood_distance(Relation.DURING, Relation.OVERLAPS) == 2
    assert subgraph_similarity(g1, g2, entry) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_subgraph_similarity_requires_containment():
    g1 = _graph("a", [A, B], [_edge(A, B, Relation.DURING, 2)])
    g2 = _graph("b", [A, B], [])  # disconnected pair
    lex = build_lexicon([], 2, restrict_to=[A, B])
    entry = next(e for e in lex.entries if len(e.labels) == 2)
    with pytest.raises(NotContained):
        subgraph_similarity(g1, g2, entry)


def test_singleton_entries_score_one():
    g1 = _graph("a", [A], [])
    lex = build_lexicon([], 1, restrict_to=[A])
    assert graph_similarity(g1, g1, lex) == 1.0


def _random_graph(rng, object_id, labels, parallel=True):
    edges = []
    base_relations = (
        Relation.PRECEDES, Relation.MEETS, Relation.OVERLAPS, Relation.STARTS,
        Relation.DURING, Relation.FINISHES, Relation.EQUALS,
    )
    present = [l for l in labels if rng.random() < 0.85]
    for src, dst in permutations(present, 2):
        if src.variable == dst.variable:
            continue
        if rng.random() < 0.45:
            chosen = rng.sample(base_relations, rng.randint(1, 2 if parallel else 1))
            for relation in chosen:
                edges.append(_edge(src, dst, relation, rng.randint(1, 4)))
    return _graph(object_id, present, edges)


def test_bounds_and_reference_agreement_on_random_graphs():
    rng = random.Random(99)
    labels = [A, B, C, TemplateLabel("vd", State.NORMAL, Gradient.DECREASING)]
    lex = build_lexicon([], 3, restrict_to=labels)
    for trial in range(40):
        g1 = _random_graph(rng, f"g1-{trial}", labels)
        g2 = _random_graph(rng, f"g2-{trial}", labels)
        fp1, fp2 = encode(g1, lex), encode(g2, lex)
        vector = similarity_vector(g1, g2, lex, fp1, fp2)
        for value in vector.values():
            assert 0.0 <= value <= 1.0
        s = graph_similarity(g1, g2, lex, fp1, fp2)
        assert 0.0 <= s <= 1.0
        assert s == pytest.approx(reference_graph_similarity(g1, g2, lex), abs=1e-12)


def test_self_similarity_is_popcount_over_n():
    rng = random.Random(41)
    labels = [A, B, C]
    lex = build_lexicon([], 3, restrict_to=labels)
    for trial in range(20):
        g = _random_graph(rng, f"g{trial}", labels)
        fp = encode(g, lex)
        assert graph_similarity(g, g, lex, fp, fp) == pytest.approx(
            fp.bit_count() / lex.n, abs=1e-15
        )


def test_documented_asymmetry_and_max_normalization():
    g1 = _graph("a", [A, B], [_edge(A, B, Relation.DURING, 2)])
    g2 = _graph(
        "b",
        [A, B],
        [_edge(A, B, Relation.DURING, 2), _edge(A, B, Relation.OVERLAPS, 2)],
    )
    lex = build_lexicon([], 2, restrict_to=[A, B])
    entry = next(e for e in lex.entries if len(e.labels) == 2)
    forward = subgraph_similarity(g1, g2, entry)
    backward = subgraph_similarity(g2, g1, entry)
    assert forward == pytest.approx(1.0)  # g1's single edge finds itself
    assert backward == pytest.approx((1.0 + 1.0 / 3.0) / 2.0)
    assert forward != backward
    # the max-count variant equalizes the denominators
    sym_fwd = subgraph_similarity(g1, g2, entry, normalization="max")
    sym_bwd = subgraph_similarity(g2, g1, entry, normalization="max")
    assert sym_fwd == pytest.approx(1.0 / 2.0)
    assert sym_bwd == pytest.approx((1.0 + 1.0 / 3.0) / 2.0)
    # and is exactly symmetric when no parallel edges are involved
    g3 = _graph("c", [A, B], [_edge(A, B, Relation.OVERLAPS, 3)])
    assert subgraph_similarity(g1, g3, entry, normalization="max") == pytest.approx(
        subgraph_similarity(g3, g1, entry, normalization="max")
    )


def test_pairwise_matrix_and_csv(tmp_path):
    rng = random.Random(7)
    labels = [A, B, C]
    lex = build_lexicon([], 2, restrict_to=labels)
    graphs = [_random_graph(rng, f"g{i}", labels) for i in range(5)]
    fps = [encode(g, lex) for g in graphs]
    matrix = pairwise_matrix(graphs, lex, fps)
    for i in range(5):
        assert matrix[i, i] == pytest.approx(fps[i].bit_count() / lex.n)
        for j in range(5):
            assert 0.0 <= matrix[i, j] <= 1.0
            expected = reference_graph_similarity(graphs[i], graphs[j], lex)
            assert matrix[i, j] == pytest.approx(expected, abs=1e-12)
    path = tmp_path / "sim.csv"
    write_matrix_csv(matrix, [g.object_id for g in graphs], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].split(",")[1:] == [g.object_id for g in graphs]
    assert len(lines) == 6


def test_disjoint_template_sets_score_zero():
    g1 = _graph("a", [A], [])
    g2 = _graph("b", [B], [])
    lex = build_lexicon([], 2, restrict_to=[A, B])
    assert graph_similarity(g1, g2, lex) == 0.0
