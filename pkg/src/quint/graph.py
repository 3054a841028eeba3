"""Per-object interaction graphs over pattern templates.

Nodes are a single object's pattern templates; a directed edge labeled with
one of the seven base relations records how often the source template's
occurrences stand in that relation to the destination template's occurrences.
Inverse relations are never stored: the occurrence pair is recorded on the
reversed node pair instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .abstraction import Gradient, State, Template
from .intervals import BASE_RELATIONS, Interval, Relation, classify, invert

_STATE_BY_ABBREV = {s.value: s for s in State}
_GRADIENT_BY_ABBREV = {g.value: g for g in Gradient}


class LabelNotPresent(KeyError):
    """A requested template label is not a node of the graph."""


@dataclass(frozen=True)
class TemplateLabel:
    """Node identity: one variable's unique (state, gradient) descriptor.

    Labels order by their canonical string form, which is also the ordering
    used in lexicon manifests and serialized graphs.
    """

    variable: str
    state: State
    gradient: Gradient

    def __str__(self) -> str:
        return f"{self.variable}-{self.gradient.value}-{self.state.value}"

    def __lt__(self, other: "TemplateLabel") -> bool:
        return str(self) < str(other)

    def __le__(self, other: "TemplateLabel") -> bool:
        return str(self) <= str(other)

    def __gt__(self, other: "TemplateLabel") -> bool:
        return str(self) > str(other)

    def __ge__(self, other: "TemplateLabel") -> bool:
        return str(self) >= str(other)

    @classmethod
    def parse(cls, text: str) -> "TemplateLabel":
        """Parse 'Variable-Grad-State' (variable names may contain dashes)."""
        variable, grad, state = text.rsplit("-", 2)
        try:
            return cls(variable, _STATE_BY_ABBREV[state], _GRADIENT_BY_ABBREV[grad])
        except KeyError:
            raise ValueError(f"not a template label: {text!r}") from None


@dataclass(frozen=True)
class Edge:
    src: TemplateLabel
    dst: TemplateLabel
    relation: Relation
    weight: int

    def __post_init__(self) -> None:
        if self.relation not in BASE_RELATIONS:
            raise ValueError(f"edges carry base relations only, got {self.relation}")
        if self.weight < 1:
            raise ValueError(f"edge weight must be >= 1, got {self.weight}")
        if self.src.variable == self.dst.variable:
            raise ValueError("edges connect templates of different variables")


@dataclass
class InteractionGraph:
    """Directed node/edge-labeled weighted multigraph for one object."""

    object_id: str
    nodes: dict[TemplateLabel, tuple[Interval, ...]] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._edge_index: dict[tuple[TemplateLabel, TemplateLabel], list[Edge]] = {}
        for edge in self.edges:
            self._edge_index.setdefault((edge.src, edge.dst), []).append(edge)
        self._pair_connected: set[frozenset[TemplateLabel]] = {
            frozenset((e.src, e.dst)) for e in self.edges
        }

    def labels(self) -> frozenset[TemplateLabel]:
        return frozenset(self.nodes)

    def edges_between(
        self, src: TemplateLabel, dst: TemplateLabel
    ) -> tuple[Edge, ...]:
        return tuple(self._edge_index.get((src, dst), ()))

    def edge_map(self) -> dict[tuple[TemplateLabel, TemplateLabel], list[Edge]]:
        """Edges grouped by directed endpoint pair (shared, do not mutate)."""
        return self._edge_index

    def connected_pairs(self) -> frozenset[frozenset[TemplateLabel]]:
        """Unordered node pairs joined by at least one edge in either direction."""
        return frozenset(self._pair_connected)


def build_graph(
    object_id: str, templates: Iterable[Template], max_gap: float
) -> InteractionGraph:
    """Classify every cross-variable occurrence pair into a weighted edge.

    Each unordered occurrence pair contributes to exactly one directed edge:
    the pair is oriented so the relation is a base relation. *precedes* pairs
    whose gap exceeds ``max_gap`` are discarded.
    """
    if max_gap <= 0:
        raise ValueError(f"max_gap must be > 0, got {max_gap}")
    by_label: dict[TemplateLabel, list[Interval]] = {}
    for t in templates:
        label = TemplateLabel(t.variable, t.state, t.gradient)
        if label in by_label:
            raise ValueError(f"duplicate template {label} for object {object_id}")
        by_label[label] = sorted(t.occurrences)

    labels = sorted(by_label)
    counts: dict[tuple[TemplateLabel, TemplateLabel, Relation], int] = {}
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            if a.variable == b.variable:
                continue
            for iv_a in by_label[a]:
                for iv_b in by_label[b]:
                    relation = classify(iv_a, iv_b)
                    if relation in BASE_RELATIONS:
                        src, dst, first, second = a, b, iv_a, iv_b
                    else:
                        relation = invert(relation)
                        src, dst, first, second = b, a, iv_b, iv_a
                    if relation is Relation.PRECEDES:
                        if second.start - first.end > max_gap:
                            continue
                    key = (src, dst, relation)
                    counts[key] = counts.get(key, 0) + 1

    edges = [
        Edge(src, dst, relation, weight)
        for (src, dst, relation), weight in counts.items()
    ]
    edges.sort(key=lambda e: (e.src, e.dst, e.relation.value))
    return InteractionGraph(
        object_id, {label: tuple(by_label[label]) for label in labels}, edges
    )


def contains(graph: InteractionGraph, labels: Iterable[TemplateLabel]) -> bool:
    """True iff all labels are nodes of ``graph`` and the induced subgraph on
    them is connected (direction ignored). Singleton sets only require node
    presence."""
    label_set = frozenset(labels)
    if not label_set:
        return False
    if not label_set <= graph.labels():
        return False
    if len(label_set) == 1:
        return True
    pairs = graph.connected_pairs()
    ordered = sorted(label_set)
    reached = {ordered[0]}
    frontier = [ordered[0]]
    while frontier:
        node = frontier.pop()
        for other in ordered:
            if other not in reached and frozenset((node, other)) in pairs:
                reached.add(other)
                frontier.append(other)
    return len(reached) == len(label_set)


def induced_subgraph(
    graph: InteractionGraph, labels: Iterable[TemplateLabel]
) -> InteractionGraph:
    """Subgraph on exactly ``labels`` with all edges of ``graph`` between them."""
    label_set = frozenset(labels)
    missing = label_set - graph.labels()
    if missing:
        raise LabelNotPresent(f"not in graph {graph.object_id}: {sorted(map(str, missing))}")
    edges = [e for e in graph.edges if e.src in label_set and e.dst in label_set]
    return InteractionGraph(
        graph.object_id,
        {label: graph.nodes[label] for label in sorted(label_set)},
        edges,
    )


def to_dict(graph: InteractionGraph) -> dict:
    return {
        "object_id": graph.object_id,
        "nodes": [
            {"label": str(label), "occurrences": [[iv.start, iv.end] for iv in ivs]}
            for label, ivs in sorted(graph.nodes.items())
        ],
        "edges": [
            {
                "src": str(e.src),
                "dst": str(e.dst),
                "relation": e.relation.value,
                "weight": e.weight,
            }
            for e in graph.edges
        ],
    }


def from_dict(payload: dict) -> InteractionGraph:
    nodes = {
        TemplateLabel.parse(entry["label"]): tuple(
            Interval(start, end) for start, end in entry["occurrences"]
        )
        for entry in payload["nodes"]
    }
    edges = [
        Edge(
            TemplateLabel.parse(entry["src"]),
            TemplateLabel.parse(entry["dst"]),
            Relation(entry["relation"]),
            int(entry["weight"]),
        )
        for entry in payload["edges"]
    ]
    return InteractionGraph(payload["object_id"], nodes, edges)


def write_jsonl(graphs: Iterable[InteractionGraph], path) -> None:
    with open(path, "w") as handle:
        for graph in graphs:
            handle.write(json.dumps(to_dict(graph), sort_keys=True))
            handle.write("\n")


def read_jsonl(path) -> Iterator[InteractionGraph]:
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield from_dict(json.loads(line))
