import math
import random

import numpy as np
import pytest

from quint.abstraction import Gradient, State
from quint.discovery import (
    Candidate,
    DegenerateAffinity,
    DiscoveryResult,
    NoCandidates,
    PriorParams,
    cluster_population,
    favoritism,
    generate_candidates,
    log_prior_score,
    prior_score,
    run_em,
    sample_significant,
)
from quint.graph import Edge, InteractionGraph, TemplateLabel
from quint.intervals import Relation
from quint.lexicon import build_lexicon, encode

A = TemplateLabel("va", State.HIGH, Gradient.STABLE)
B = TemplateLabel("vb", State.HIGH, Gradient.STABLE)
C = TemplateLabel("vc", State.LOW, Gradient.STABLE)
D = TemplateLabel("vd", State.LOW, Gradient.STABLE)


def _graph(object_id, labels, edges):
    return InteractionGraph(
        object_id,
        {label: () for label in sorted(labels)},
        sorted(edges, key=lambda e: (e.src, e.dst, e.relation.value)),
    )


def _candidate(labels, edges, w=None, n=None, f=0.0, entry=0):
    subgraph = _graph("cand", labels, edges)
    weights = [e.weight for e in edges]
    return Candidate(
        subgraph=subgraph,
        entry_index=entry,
        mean_weight=float(w if w is not None else np.mean(weights)),
        node_count=n if n is not None else len(labels),
        favoritism=f,
    )


def test_prior_score_components():
    cand = _candidate([A, B], [Edge(A, B, Relation.DURING, 2)], f=-3.0)
    zero = PriorParams(0.0, 0.0, 0.0)
    assert prior_score(cand, zero) == 1.0
    params = PriorParams(0.5, 0.25, 0.125)
    expected = math.exp(-0.5 * 2 + 0.25 * 2 + 0.125 * -3.0)
    assert prior_score(cand, params) == pytest.approx(expected, rel=1e-12)
    assert log_prior_score(cand, params) == pytest.approx(
        math.log(expected), rel=1e-12
    )


def test_prior_params_validation():
    with pytest.raises(ValueError):
        PriorParams(-0.1, 0.0, 0.0)


def test_prior_monotonicity_in_each_component():
    rng = random.Random(17)
    params = PriorParams(0.7, 0.4, 0.2)
    for _ in range(100):
        w = rng.uniform(1, 6)
        n = rng.randint(2, 6)
        f = rng.uniform(-50, 0)
        base = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)], w=w, n=n, f=f)
        lighter = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)], w=w + rng.uniform(0.1, 3), n=n, f=f)
        assert prior_score(base, params) > prior_score(lighter, params)
        bigger = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)], w=w, n=n + 1, f=f)
        assert prior_score(bigger, params) > prior_score(base, params)
        favored = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)], w=w, n=n, f=f + rng.uniform(0.1, 5))
        assert prior_score(favored, params) > prior_score(base, params)


def test_favoritism_values():
    g_ab = _graph("g1", [A, B], [Edge(A, B, Relation.DURING, 1)])
    lex = build_lexicon([], 2, restrict_to=[A, B])
    # identical population: S(g, g) = popcount/n = 1 -> log 1 = 0 per member
    population = [g_ab, g_ab]
    assert favoritism(g_ab, population, lex) == pytest.approx(0.0, abs=1e-12)
    # zero-overlap member hits the epsilon floor instead of -inf
    g_c = _graph("g2", [C], [])
    lex2 = build_lexicon([], 2, restrict_to=[A, B, C])
    value = favoritism(g_ab, [g_c], lex2, epsilon=1e-9)
    assert value == pytest.approx(math.log(1e-9))
    with pytest.raises(ValueError):
        favoritism(g_ab, [], lex)


def test_favoritism_half_similarity_example():
    # population engineered so S(candidate, member) = 0.5 for both members:
    # lexicon n = 2 (two singletons), candidate holds both labels, member one.
    lex = build_lexicon([], 1, restrict_to=[A, B])
    cand = _graph("cand", [A, B], [Edge(A, B, Relation.DURING, 1)])
    member = _graph("m", [A], [])
    value = favoritism(cand, [member, member], lex)
    assert value == pytest.approx(2 * math.log(0.5), abs=1e-12)


def test_cluster_population_two_blocks():
    size = 12
    matrix = np.full((size, size), 0.05)
    for i in range(size):
        for j in range(size):
            if (i < size // 2) == (j < size // 2):
                matrix[i, j] = 0.9
    np.fill_diagonal(matrix, 1.0)
    labels = cluster_population(matrix, knn_k=3, seed=0)
    first = set(labels[: size // 2])
    second = set(labels[size // 2 :])
    assert len(first) == 1 and len(second) == 1
    assert first != second


def test_cluster_population_degenerate_and_tiny():
    warned = pytest.warns(DegenerateAffinity)
    with warned:
        labels = cluster_population(np.full((5, 5), 0.4), seed=0)
    assert set(labels) == {0}
    assert list(cluster_population(np.ones((1, 1)), seed=0)) == [0]


def test_generate_candidates_support_and_modal_config():
    lex = build_lexicon([], 2, restrict_to=[A, B, C])
    during = Edge(A, B, Relation.DURING, 1)
    overlaps = Edge(A, B, Relation.OVERLAPS, 1)
    cluster = [
        _graph("g0", [A, B], [during]),
        _graph("g1", [A, B], [during]),
        _graph("g2", [A, B], [during]),
        _graph("g3", [A, B], [overlaps]),
        _graph("g4", [A, B], [overlaps]),
        _graph("g5", [C], []),
    ]
    candidates = generate_candidates(cluster, lex, 0.5, population=cluster)
    assert len(candidates) == 1
    candidate = candidates[0]
    assert candidate.labels == frozenset((A, B))
    # 60/40 split resolves to the majority relation
    assert [e.relation for e in candidate.subgraph.edges] == [Relation.DURING]
    assert candidate.mean_weight == 1.0
    assert candidate.node_count == 2
    # below support: nothing emitted
    assert generate_candidates(cluster, lex, 0.99, population=cluster) == []


def test_generate_candidates_tie_breaks_to_lower_weight():
    lex = build_lexicon([], 2, restrict_to=[A, B])
    light = Edge(A, B, Relation.DURING, 1)
    heavy = Edge(A, B, Relation.DURING, 4)
    cluster = [
        _graph("g0", [A, B], [light]),
        _graph("g1", [A, B], [heavy]),
    ]
    candidates = generate_candidates(cluster, lex, 0.5, population=cluster)
    assert candidates[0].subgraph.edges[0].weight == 1


def _em_fixture(n_graphs=12, contain_all=True):
    g_template = _graph("g", [A, B, C], [
        Edge(A, B, Relation.DURING, 1), Edge(A, C, Relation.DURING, 1),
    ])
    graphs = [
        _graph(f"g{i}", [A, B, C], list(g_template.edges)) for i in range(n_graphs)
    ]
    lex = build_lexicon([], 2, restrict_to=[A, B, C])
    fps = [encode(g, lex) for g in graphs]
    return graphs, lex, fps


def test_run_em_single_candidate_converges_immediately():
    graphs, lex, fps = _em_fixture()
    entry = lex.index_of([A, B])
    candidate = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)], f=-1.0,
                           entry=entry)
    result = run_em([candidate], graphs, fps, lex.n, clusters={}, tol=1e-9)
    assert len(result.ranked) == 1
    assert result.ranked[0][1] == pytest.approx(1.0, abs=1e-12)
    assert len(result.trace) <= 3


def test_run_em_two_candidates_prefers_lower_weight():
    graphs, lex, fps = _em_fixture()
    light = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)], f=-2.0,
                       entry=lex.index_of([A, B]))
    heavy = _candidate([A, C], [Edge(A, C, Relation.DURING, 3)], w=3.0, f=-2.0,
                       entry=lex.index_of([A, C]))
    result = run_em([light, heavy], graphs, fps, lex.n, clusters={}, tol=1e-9)
    assert result.params.lambda_weight > 0
    posteriors = {c.pattern_id: p for c, p in result.ranked}
    assert result.ranked[0][0].mean_weight == 1.0
    assert result.ranked[0][1] > 0.5
    assert sum(posteriors.values()) == pytest.approx(1.0, abs=1e-9)


def test_run_em_trace_monotone_and_normalized():
    rng = random.Random(2)
    graphs = []
    for i in range(30):
        labels = [A, B] + ([C] if rng.random() < 0.8 else []) + (
            [D] if rng.random() < 0.6 else []
        )
        edges = [Edge(A, B, Relation.DURING, rng.randint(1, 3))]
        if C in labels:
            edges.append(Edge(A, C, Relation.OVERLAPS, rng.randint(1, 2)))
        if D in labels:
            edges.append(Edge(B, D, Relation.PRECEDES, 1))
        graphs.append(_graph(f"g{i}", labels, edges))
    lex = build_lexicon([], 2, restrict_to=[A, B, C, D])
    fps = [encode(g, lex) for g in graphs]
    groups = [
        generate_candidates(graphs, lex, 0.3, population=graphs,
                            cluster_fps=fps, population_fps=fps)
    ]
    result = run_em(groups, graphs, fps, lex.n, clusters={}, tol=1e-9,
                    max_iter=200)
    diffs = [b - a for a, b in zip(result.trace, result.trace[1:])]
    assert all(d >= -1e-9 for d in diffs)
    assert len(result.trace) <= 200
    total = sum(p for _, p in result.ranked)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_competing_pressure_never_picks_the_maximal_candidate():
    # Small motif in every graph with light edges; the maximal motif appears
    # in two graphs only, with a heavier core edge that mismatches the
    # population's common configuration. Its favoritism pays per non-carrier
    # while the small motif's does not, so the argmax is never the maximal
    # candidate despite the size bonus.
    small_edges = [Edge(A, B, Relation.DURING, 1)]
    big_edges = [
        Edge(A, B, Relation.DURING, 5), Edge(A, C, Relation.DURING, 5),
        Edge(B, D, Relation.OVERLAPS, 5),
    ]
    graphs = [_graph(f"s{i}", [A, B], list(small_edges)) for i in range(40)]
    graphs += [_graph(f"b{i}", [A, B, C, D], list(big_edges)) for i in range(2)]
    lex = build_lexicon([], 4, restrict_to=[A, B, C, D])
    fps = [encode(g, lex) for g in graphs]
    candidates = generate_candidates(
        graphs, lex, 0.04, population=graphs, cluster_fps=fps, population_fps=fps
    )
    assert max(c.node_count for c in candidates) == 4
    maximal = next(c for c in candidates if c.node_count == 4)
    common_small = next(c for c in candidates if c.labels == frozenset((A, B)))
    assert maximal.favoritism < common_small.favoritism
    result = run_em(candidates, graphs, fps, lex.n, clusters={}, tol=1e-9)
    top = result.ranked[0][0]
    assert top.node_count < 4


def test_run_em_rejects_empty_and_nonfinite():
    graphs, lex, fps = _em_fixture()
    with pytest.raises(NoCandidates):
        run_em([], graphs, fps, lex.n, clusters={})
    bad = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)],
                     f=float("-inf"), entry=lex.index_of([A, B]))
    from quint.discovery import NonFiniteScore

    with pytest.raises(NonFiniteScore):
        run_em([bad], graphs, fps, lex.n, clusters={})


def test_sample_significant_counts_and_tie_breaks():
    graphs, lex, fps = _em_fixture()
    ranked = []
    rng = random.Random(3)
    for k in range(780):
        cand = _candidate(
            [A, B], [Edge(A, B, Relation.DURING, 1)],
            w=1.0 + (k % 5), f=-float(k), entry=k,
        )
        cand.pattern_id = f"p{k:06d}"
        ranked.append((cand, 1.0 / 780))
    result = DiscoveryResult(ranked, PriorParams(), [0.0], {}, 0, lex.n)
    assert len(sample_significant(result, 0.05)) == 39
    assert len(sample_significant(result, 1.0)) == 780
    with pytest.raises(ValueError):
        sample_significant(result, 0.0)
    # explicit tie-break check: equal posterior, lower weight first
    tie = [
        (_candidate([A, B], [Edge(A, B, Relation.DURING, 3)], w=3.0, entry=1), 0.5),
        (_candidate([A, B], [Edge(A, B, Relation.DURING, 1)], w=1.0, entry=2), 0.5),
    ]
    ordered = run_em(
        [c for c, _ in tie], graphs, fps, lex.n, clusters={},
        init=PriorParams(0.0, 0.0, 0.0), max_iter=1,
    )
    assert ordered.ranked[0][0].mean_weight <= ordered.ranked[1][0].mean_weight


def test_discovery_result_round_trip(tmp_path):
    graphs, lex, fps = _em_fixture()
    entry = lex.index_of([A, B])
    candidate = _candidate([A, B], [Edge(A, B, Relation.DURING, 1)], f=-1.0,
                           entry=entry)
    result = run_em([candidate], graphs, fps, lex.n,
                    clusters={g.object_id: 0 for g in graphs}, seed=5)
    path = tmp_path / "discovery.json"
    result.save(path)
    loaded = DiscoveryResult.load(path)
    assert loaded.seed == 5
    assert loaded.params == result.params
    assert loaded.trace == result.trace
    assert loaded.clusters == result.clusters
    assert [c.pattern_id for c, _ in loaded.ranked] == [
        c.pattern_id for c, _ in result.ranked
    ]
    assert loaded.ranked[0][0].to_dict() == result.ranked[0][0].to_dict()
