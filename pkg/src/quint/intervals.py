"""Closed time intervals and the thirteen qualitative relations between them.

Intervals are proper ([start, end] with start < end, seconds). The relation
between two intervals is decided by exact endpoint comparisons; tolerance for
noisy endpoints, when needed, is applied upstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache


class Relation(Enum):
    PRECEDES = "precedes"
    MEETS = "meets"
    OVERLAPS = "overlaps"
    STARTS = "starts"
    DURING = "during"
    FINISHES = "finishes"
    EQUALS = "equals"
    PRECEDED_BY = "preceded_by"
    MET_BY = "met_by"
    OVERLAPPED_BY = "overlapped_by"
    STARTED_BY = "started_by"
    CONTAINS = "contains"
    FINISHED_BY = "finished_by"

    def __str__(self) -> str:
        return self.value


#: The seven relations recorded on interaction-graph edges; the other six are
#: implied by reversing edge direction.
BASE_RELATIONS = (
    Relation.PRECEDES,
    Relation.MEETS,
    Relation.OVERLAPS,
    Relation.STARTS,
    Relation.DURING,
    Relation.FINISHES,
    Relation.EQUALS,
)

_INVERSE = {
    Relation.PRECEDES: Relation.PRECEDED_BY,
    Relation.MEETS: Relation.MET_BY,
    Relation.OVERLAPS: Relation.OVERLAPPED_BY,
    Relation.STARTS: Relation.STARTED_BY,
    Relation.DURING: Relation.CONTAINS,
    Relation.FINISHES: Relation.FINISHED_BY,
    Relation.EQUALS: Relation.EQUALS,
}
_INVERSE.update({v: k for k, v in _INVERSE.items() if v is not Relation.EQUALS})

#: Neighbourhood structure: two relations are adjacent when one can be turned
#: into the other by continuously sliding a single interval endpoint.
NEIGHBOR_EDGES = (
    (Relation.PRECEDES, Relation.MEETS),
    (Relation.MEETS, Relation.OVERLAPS),
    (Relation.OVERLAPS, Relation.STARTS),
    (Relation.OVERLAPS, Relation.FINISHED_BY),
    (Relation.STARTS, Relation.EQUALS),
    (Relation.STARTS, Relation.DURING),
    (Relation.FINISHED_BY, Relation.EQUALS),
    (Relation.FINISHED_BY, Relation.CONTAINS),
    (Relation.EQUALS, Relation.STARTED_BY),
    (Relation.EQUALS, Relation.FINISHES),
    (Relation.DURING, Relation.FINISHES),
    (Relation.CONTAINS, Relation.STARTED_BY),
    (Relation.STARTED_BY, Relation.OVERLAPPED_BY),
    (Relation.FINISHES, Relation.OVERLAPPED_BY),
    (Relation.OVERLAPPED_BY, Relation.MET_BY),
    (Relation.MET_BY, Relation.PRECEDED_BY),
)


class DegenerateInterval(ValueError):
    """Raised when an interval would have zero or negative length."""


@dataclass(frozen=True, order=True)
class Interval:
    """Closed interval [start, end] in seconds with start < end."""

    start: float
    end: float

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise DegenerateInterval(
                f"interval requires start < end, got [{self.start}, {self.end}]"
            )

    @property
    def length(self) -> float:
        return self.end - self.start


def classify(a: Interval, b: Interval) -> Relation:
    """Return the unique relation holding from ``a`` to ``b``.

    Total over proper intervals: exactly one of the thirteen relations
    applies to any ordered pair, and classify(a, b) == invert(classify(b, a)).
    """
    if a.end < b.start:
        return Relation.PRECEDES
    if b.end < a.start:
        return Relation.PRECEDED_BY
    if a.end == b.start:
        return Relation.MEETS
    if b.end == a.start:
        return Relation.MET_BY
    if a.start == b.start:
        if a.end == b.end:
            return Relation.EQUALS
        return Relation.STARTS if a.end < b.end else Relation.STARTED_BY
    if a.end == b.end:
        return Relation.FINISHES if a.start > b.start else Relation.FINISHED_BY
    if a.start < b.start:
        return Relation.CONTAINS if a.end > b.end else Relation.OVERLAPS
    # a.start > b.start
    return Relation.DURING if a.end < b.end else Relation.OVERLAPPED_BY


def invert(relation: Relation) -> Relation:
    """Return the relation seen from the opposite direction (an involution)."""
    return _INVERSE[relation]


@lru_cache(maxsize=1)
def _distance_table() -> dict[Relation, dict[Relation, int]]:
    adjacency: dict[Relation, list[Relation]] = {r: [] for r in Relation}
    for u, v in NEIGHBOR_EDGES:
        adjacency[u].append(v)
        adjacency[v].append(u)
    table: dict[Relation, dict[Relation, int]] = {}
    for source in Relation:
        dist = {source: 0}
        frontier = [source]
        while frontier:
            nxt = []
            for node in frontier:
                for neighbor in adjacency[node]:
                    if neighbor not in dist:
                        dist[neighbor] = dist[node] + 1
                        nxt.append(neighbor)
            frontier = nxt
        table[source] = dist
    return table


def neighborhood_distance(r1: Relation, r2: Relation) -> int:
    """Shortest-path length between two relations in the neighbourhood graph."""
    return _distance_table()[r1][r2]


def neighbors(relation: Relation) -> frozenset[Relation]:
    """Relations at neighbourhood distance exactly one from ``relation``."""
    table = _distance_table()[relation]
    return frozenset(r for r, d in table.items() if d == 1)
