"""Subgraph lexicon and multi-hot structural fingerprints.

The lexicon enumerates every candidate template set of size 1..k_max over a
label universe (entries of size >= 2 must span at least two variables, since
single-variable sets can never form connected interaction subgraphs). A
graph's fingerprint sets bit k when the graph contains entry k: all labels
present and the induced subgraph connected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Iterable, Iterator

from .abstraction import Gradient, State
from .graph import InteractionGraph, TemplateLabel, contains


class LexiconTooLarge(ValueError):
    """Enumeration would exceed the configured entry cap."""


class UniverseMismatch(ValueError):
    """Graph carries a template label outside the lexicon universe."""


@dataclass(frozen=True)
class LexiconEntry:
    labels: frozenset[TemplateLabel]
    index: int

    def label_strings(self) -> tuple[str, ...]:
        return tuple(sorted(str(label) for label in self.labels))


@dataclass
class Lexicon:
    entries: list[LexiconEntry]
    k_max: int
    universe: frozenset[TemplateLabel]

    def __post_init__(self) -> None:
        self._index: dict[frozenset[TemplateLabel], int] = {
            entry.labels: entry.index for entry in self.entries
        }

    @property
    def n(self) -> int:
        return len(self.entries)

    def index_of(self, labels: Iterable[TemplateLabel]) -> int | None:
        return self._index.get(frozenset(labels))


def _count_entries(labels: list[TemplateLabel], k_max: int) -> int:
    per_variable: dict[str, int] = {}
    for label in labels:
        per_variable[label.variable] = per_variable.get(label.variable, 0) + 1
    total = 0
    for k in range(1, k_max + 1):
        total += comb(len(labels), k)
        if k >= 2:
            total -= sum(comb(m, k) for m in per_variable.values())
    return total


def all_labels_for(variables: Iterable[str]) -> list[TemplateLabel]:
    """The full 9-label product (3 states x 3 gradients) per variable."""
    return [
        TemplateLabel(variable, state, gradient)
        for variable in variables
        for state in State
        for gradient in Gradient
    ]


def build_lexicon(
    variables: Iterable[str],
    k_max: int,
    restrict_to: Iterable[TemplateLabel] | None = None,
    cap: int = 10**6,
) -> Lexicon:
    """Enumerate all entries of size 1..k_max over the label universe.

    The universe is the observed template set when ``restrict_to`` is given,
    otherwise the full 9 labels per variable. Raises LexiconTooLarge before
    materializing anything the cap would not admit.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if restrict_to is not None:
        labels = sorted(set(restrict_to))
    else:
        labels = sorted(set(all_labels_for(variables)))
    expected = _count_entries(labels, k_max)
    if expected > cap:
        raise LexiconTooLarge(
            f"lexicon would have {expected} entries (cap {cap}); restrict the "
            f"universe to observed templates or lower k_max"
        )
    keyed: list[tuple[tuple[str, ...], int, frozenset[TemplateLabel]]] = []
    for k in range(1, k_max + 1):
        for combo in combinations(labels, k):
            if k >= 2 and len({label.variable for label in combo}) < 2:
                continue
            label_set = frozenset(combo)
            key = tuple(sorted(str(label) for label in combo))
            keyed.append((key, k, label_set))
    keyed.sort(key=lambda item: (item[0], item[1]))
    entries = [
        LexiconEntry(label_set, index)
        for index, (_, _, label_set) in enumerate(keyed)
    ]
    return Lexicon(entries, k_max, frozenset(labels))


def iter_bits(mask: int) -> Iterator[int]:
    """Yield the indices of set bits, ascending."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def encode(graph: InteractionGraph, lexicon: Lexicon) -> int:
    """Multi-hot fingerprint of ``graph``: bit k set iff entry k is contained.

    Implemented by enumerating the graph's connected label subsets up to
    k_max by neighbor expansion, which is equivalent to scanning every entry
    with ``contains`` but does not touch entries the graph cannot hold.
    """
    labels = graph.labels()
    foreign = labels - lexicon.universe
    if foreign:
        raise UniverseMismatch(
            f"graph {graph.object_id} has labels outside the lexicon universe: "
            f"{sorted(map(str, foreign))}"
        )
    adjacency: dict[TemplateLabel, set[TemplateLabel]] = {l: set() for l in labels}
    for pair in graph.connected_pairs():
        a, b = tuple(pair)
        adjacency[a].add(b)
        adjacency[b].add(a)

    mask = 0
    current: set[frozenset[TemplateLabel]] = set()
    for label in labels:
        singleton = frozenset((label,))
        index = lexicon.index_of(singleton)
        if index is not None:
            mask |= 1 << index
        current.add(singleton)
    for _ in range(1, lexicon.k_max):
        nxt: set[frozenset[TemplateLabel]] = set()
        for subset in current:
            reachable = set()
            for member in subset:
                reachable |= adjacency[member]
            for neighbor in reachable - subset:
                grown = subset | {neighbor}
                if grown not in nxt:
                    nxt.add(grown)
        for subset in nxt:
            index = lexicon.index_of(subset)
            if index is not None:
                mask |= 1 << index
        current = nxt
    return mask


def encode_by_scan(graph: InteractionGraph, lexicon: Lexicon) -> int:
    """Reference encoding: test every entry with ``contains``. O(n) per graph;
    kept for cross-checking the expansion-based route."""
    labels = graph.labels()
    foreign = labels - lexicon.universe
    if foreign:
        raise UniverseMismatch(
            f"graph {graph.object_id} has labels outside the lexicon universe: "
            f"{sorted(map(str, foreign))}"
        )
    mask = 0
    for entry in lexicon.entries:
        if entry.labels <= labels and contains(graph, entry.labels):
            mask |= 1 << entry.index
    return mask


def save_manifest(lexicon: Lexicon, path) -> None:
    payload = {
        "k_max": lexicon.k_max,
        "universe": sorted(str(label) for label in lexicon.universe),
        "entries": [list(entry.label_strings()) for entry in lexicon.entries],
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, sort_keys=True)
        handle.write("\n")


def load_manifest(path) -> Lexicon:
    with open(path) as handle:
        payload = json.load(handle)
    entries = [
        LexiconEntry(frozenset(TemplateLabel.parse(s) for s in labels), index)
        for index, labels in enumerate(payload["entries"])
    ]
    universe = frozenset(TemplateLabel.parse(s) for s in payload["universe"])
    return Lexicon(entries, payload["k_max"], universe)
