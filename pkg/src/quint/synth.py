"""Reproducible synthetic cohorts with planted interaction subgraphs.

Each planted pattern is laid out once on a coarse time grid as a motif of
occurrence intervals satisfying its relations; every carrying object gets a
translated copy of that layout inside its own window. Variables are charted
sparsely (samples exist only inside scheduled intervals), windows and motif
repeats are spaced beyond the graph gap limit, and the first/last samples of
every interval sit exactly on the scheduled endpoints, so abstraction
reproduces the planted occurrence intervals and relations exactly. Value
trajectories are piecewise-linear ramps or plateaus with additive noise
bounded away from the gradient cutoff.

Generation self-verifies by pushing the emitted streams through the real
abstraction/graph pipeline and checking every planted pattern with the same
matcher the feature stage uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .abstraction import (
    Gradient,
    KnowledgeBase,
    State,
    Template,
    VariableRule,
    abstract_variable,
)
from .discovery import Candidate
from .features import matches
from .graph import Edge, InteractionGraph, TemplateLabel, build_graph
from .intervals import BASE_RELATIONS, Interval, Relation, classify, invert


class InfeasiblePlant(ValueError):
    """The requested pattern cannot be realized by the generator."""


class PlantVerificationError(RuntimeError):
    """Round-trip verification through the pipeline failed."""


@dataclass(frozen=True)
class PlantedPattern:
    """A ground-truth interaction: labels plus base-relation edges.

    ``repeats`` replays the whole motif in gap-separated sub-windows, which
    multiplies every edge weight by the repeat count.
    """

    name: str
    labels: tuple[TemplateLabel, ...]
    edges: tuple[tuple[int, int, Relation], ...]
    repeats: int = 1

    def normalized(self) -> "PlantedPattern":
        """Validate and rewrite inverse relations as reversed base edges."""
        if len(self.labels) < 2:
            raise InfeasiblePlant(f"{self.name}: need at least two labels")
        variables = [label.variable for label in self.labels]
        if len(set(variables)) != len(variables):
            raise InfeasiblePlant(
                f"{self.name}: labels must come from distinct variables"
            )
        if self.repeats < 1:
            raise InfeasiblePlant(f"{self.name}: repeats must be >= 1")
        edges = []
        for src, dst, relation in self.edges:
            if src == dst:
                raise InfeasiblePlant(f"{self.name}: self-edge on label {src}")
            if not (0 <= src < len(self.labels) and 0 <= dst < len(self.labels)):
                raise InfeasiblePlant(f"{self.name}: edge index out of range")
            if relation not in BASE_RELATIONS:
                src, dst, relation = dst, src, invert(relation)
            edges.append((src, dst, relation))
        if not edges:
            raise InfeasiblePlant(f"{self.name}: need at least one edge")
        return replace(self, edges=tuple(edges))

    def expected_interpretation(self) -> Candidate:
        """The pattern as a scored-shape candidate for matches()/recovery.

        Edge orientation follows graph construction: symmetric *equals*
        edges run from the lexicographically smaller label.
        """
        edge_objs = []
        for src, dst, relation in self.edges:
            a, b = self.labels[src], self.labels[dst]
            if relation is Relation.EQUALS and not a < b:
                a, b = b, a
            edge_objs.append(Edge(a, b, relation, self.repeats))
        edge_objs.sort(key=lambda e: (e.src, e.dst, e.relation.value))
        subgraph = InteractionGraph(
            f"pattern-{self.name}",
            {label: () for label in sorted(self.labels)},
            edge_objs,
        )
        return Candidate(
            subgraph=subgraph,
            entry_index=-1,
            mean_weight=float(self.repeats),
            node_count=len(self.labels),
            favoritism=0.0,
            pattern_id=self.name,
        )


@dataclass(frozen=True)
class NoiseModel:
    period_jitter: float = 0.2  # fraction of a sampling gap
    value_noise: float = 0.25  # fraction of the gradient delta
    drift: float = 0.25  # per-window baseline offset, fraction of delta

    def __post_init__(self) -> None:
        if not 0 <= self.period_jitter <= 1:
            raise ValueError("period_jitter must be in [0, 1]")
        if not 0 <= self.value_noise <= 0.45:
            raise ValueError("value_noise must be in [0, 0.45] of the delta")
        if not 0 <= self.drift <= 0.5:
            raise ValueError("drift must be in [0, 0.5] of the delta")


@dataclass
class SynthSpec:
    n_pos: int
    n_neg: int
    kb: KnowledgeBase
    planted: tuple[PlantedPattern, ...]
    plant_rate: float
    common: tuple[PlantedPattern, ...] = ()
    common_rate: float = 0.9
    seed: int = 0
    max_gap: float = 3600.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    leak_tolerance: float = 0.0
    base_periods: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if not 0 < self.plant_rate <= 1:
            raise ValueError(f"plant_rate must be in (0, 1], got {self.plant_rate}")
        if not 0 < self.common_rate <= 1:
            raise ValueError(f"common_rate must be in (0, 1], got {self.common_rate}")
        if self.n_pos < 1 or self.n_neg < 0:
            raise ValueError("need n_pos >= 1 and n_neg >= 0")

    @property
    def layout_unit(self) -> float:
        return self.max_gap / 24.0

    @property
    def split_gap(self) -> float:
        # Runs must not span the silence between windows or motif repeats.
        return self.max_gap

    @property
    def repeat_spacing(self) -> float:
        return 1.35 * self.max_gap

    @property
    def window_spacing(self) -> float:
        return 1.5 * self.max_gap

    def period_for(self, variable: str) -> float:
        if self.base_periods and variable in self.base_periods:
            return self.base_periods[variable]
        ordered = sorted(self.kb.rules)
        index = ordered.index(variable) if variable in ordered else 0
        return 240.0 + 60.0 * (index % 5)


# Grid slots: starts and lengths in layout units; span capped so every
# within-motif gap stays under the graph gap limit.
_SLOT_LENGTHS = (3, 5, 8, 12)
_MAX_END_SLOT = 20


def solve_layout(pattern: PlantedPattern, unit: float) -> dict[int, tuple[float, float]]:
    """Place each label's interval on the grid so all edge relations hold.

    Deterministic backtracking over slot candidates; raises InfeasiblePlant
    when the relation set is unsatisfiable (e.g. mutual containment).
    """
    wanted: dict[tuple[int, int], Relation] = {}
    for src, dst, relation in pattern.edges:
        existing = wanted.get((src, dst))
        if existing is not None and existing is not relation:
            raise InfeasiblePlant(
                f"{pattern.name}: conflicting relations for one label pair"
            )
        wanted[(src, dst)] = relation

    candidates = [
        (s, s + length)
        for s in range(_MAX_END_SLOT)
        for length in _SLOT_LENGTHS
        if s + length <= _MAX_END_SLOT
    ]

    def consistent(placed: dict[int, tuple[int, int]], i: int) -> bool:
        iv_i = Interval(float(placed[i][0]), float(placed[i][1]))
        for j, slot_j in placed.items():
            if j == i:
                continue
            iv_j = Interval(float(slot_j[0]), float(slot_j[1]))
            for (a, b), relation in wanted.items():
                if (a, b) == (i, j) and classify(iv_i, iv_j) is not relation:
                    return False
                if (a, b) == (j, i) and classify(iv_j, iv_i) is not relation:
                    return False
        return True

    order = list(range(len(pattern.labels)))
    placed: dict[int, tuple[int, int]] = {}

    def backtrack(position: int) -> bool:
        if position == len(order):
            return True
        node = order[position]
        for slot in candidates:
            placed[node] = slot
            if consistent(placed, node) and backtrack(position + 1):
                return True
            del placed[node]
        return False

    if not backtrack(0):
        raise InfeasiblePlant(f"{pattern.name}: relations are unsatisfiable")
    return {i: (slot[0] * unit, slot[1] * unit) for i, slot in placed.items()}


def _assign_carriers(
    rng: np.random.Generator, n_objects: int, n_patterns: int, rate: float
) -> list[set[int]]:
    """Exactly round(rate * n) carriers per pattern; misses rotate through a
    seeded permutation so no object loses more patterns than necessary."""
    count = int(round(rate * n_objects))
    count = max(1, min(n_objects, count))
    miss = n_objects - count
    perm = list(rng.permutation(n_objects))
    out: list[set[int]] = []
    cursor = 0
    for _ in range(n_patterns):
        missing = {perm[(cursor + i) % n_objects] for i in range(miss)}
        cursor += miss
        out.append(set(range(n_objects)) - missing)
    return out


def _stable_values(
    rng: np.random.Generator, n: int, rule: VariableRule, state: State, noise: NoiseModel
) -> np.ndarray:
    delta = rule.gradient_delta
    width = rule.normal_high - rule.normal_low
    amp = noise.value_noise * delta
    if state is State.NORMAL:
        amp = min(amp, 0.2 * width)
        offset = rng.uniform(-1, 1) * min(noise.drift * delta, 0.15 * width)
        base = (rule.normal_low + rule.normal_high) / 2.0 + offset
    elif state is State.LOW:
        offset = rng.uniform(-1, 1) * noise.drift * delta
        base = rule.normal_low - 1.5 * delta - abs(offset)
    else:
        offset = rng.uniform(-1, 1) * noise.drift * delta
        base = rule.normal_high + 1.5 * delta + abs(offset)
    return base + rng.uniform(-amp, amp, n)


def _ramp_values(
    rng: np.random.Generator,
    n: int,
    rule: VariableRule,
    state: State,
    gradient: Gradient,
    noise: NoiseModel,
) -> np.ndarray:
    delta = rule.gradient_delta
    width = rule.normal_high - rule.normal_low
    if state is State.NORMAL:
        step = 1.2 * delta
        span = (n - 1) * step
        if span > 0.7 * width:
            raise InfeasiblePlant(
                f"normal-band ramp of {n} samples does not fit the range"
            )
        base = (rule.normal_low + rule.normal_high) / 2.0 - span / 2.0
        amp = min(0.05 * delta, 0.05 * width)
    else:
        step = 1.5 * delta
        amp = 0.2 * delta
        span = (n - 1) * step
        if state is State.HIGH:
            base = rule.normal_high + 1.5 * delta
        else:
            base = rule.normal_low - 1.5 * delta - span
    ramp = base + step * np.arange(n)
    if gradient is Gradient.DECREASING:
        ramp = ramp[::-1]
    return ramp + rng.uniform(-amp, amp, n)


def _sample_interval(
    rng: np.random.Generator,
    label: TemplateLabel,
    start: float,
    end: float,
    rule: VariableRule,
    spec: SynthSpec,
) -> list[tuple[float, float]]:
    """Sample times and values over one scheduled occurrence.

    First and last samples land exactly on the interval endpoints; interior
    times are jittered, values follow the label's plateau or ramp.
    """
    length = end - start
    period = spec.period_for(label.variable)
    n = max(2, int(round(length / period)))
    if label.gradient is not Gradient.STABLE and label.state is State.NORMAL:
        width = rule.normal_high - rule.normal_low
        cap = int(math.floor(0.7 * width / (1.2 * rule.gradient_delta))) + 1
        if cap < 2:
            raise InfeasiblePlant(
                f"{label}: normal range too narrow for a gradient pattern"
            )
        n = min(n, cap)
    gap = length / (n - 1)
    if gap > 0.9 * spec.split_gap:
        raise InfeasiblePlant(
            f"{label}: interval of {length:.0f}s needs sampling gaps above the "
            f"split threshold"
        )
    times = start + gap * np.arange(n)
    if n > 2:
        jitter = rng.uniform(-0.35, 0.35, n - 2) * gap * min(
            spec.noise.period_jitter / 0.2, 1.0
        )
        times[1:-1] += jitter
    times[0] = start
    times[-1] = end
    if label.gradient is Gradient.STABLE:
        values = _stable_values(rng, n, rule, label.state, spec.noise)
    else:
        values = _ramp_values(rng, n, rule, label.state, label.gradient, spec.noise)
    return list(zip(times.tolist(), values.tolist()))


@dataclass
class _Motif:
    pattern: PlantedPattern
    layout: dict[int, tuple[float, float]]

    @property
    def span(self) -> float:
        return max(end for _, end in self.layout.values())

    def total_span(self, spec: SynthSpec) -> float:
        return (self.pattern.repeats - 1) * (
            self.span + spec.repeat_spacing
        ) + self.span


def _object_rows(
    rng: np.random.Generator,
    object_id: str,
    motifs: Sequence[_Motif],
    spec: SynthSpec,
) -> list[tuple[str, str, float, float]]:
    rows: list[tuple[str, str, float, float]] = []
    order = list(rng.permutation(len(motifs)))
    cursor = float(int(rng.uniform(0, spec.max_gap)))
    for index in order:
        motif = motifs[index]
        step = motif.span + spec.repeat_spacing
        for label_index, (rel_start, rel_end) in sorted(motif.layout.items()):
            label = motif.pattern.labels[label_index]
            rule = spec.kb[label.variable]
            for repeat in range(motif.pattern.repeats):
                offset = cursor + repeat * step
                for t, v in _sample_interval(
                    rng, label, offset + rel_start, offset + rel_end, rule, spec
                ):
                    rows.append((object_id, label.variable, t, v))
        cursor += motif.total_span(spec) + spec.window_spacing
    rows.sort(key=lambda row: (row[1], row[2]))
    return rows


@dataclass
class SynthResult:
    rows_pos: list[tuple[str, str, float, float]]
    rows_neg: list[tuple[str, str, float, float]]
    manifest: dict

    def positive_ids(self) -> list[str]:
        return sorted({row[0] for row in self.rows_pos})

    def negative_ids(self) -> list[str]:
        return sorted({row[0] for row in self.rows_neg})


def _pattern_manifest(pattern: PlantedPattern, layout, carriers: list[str]) -> dict:
    return {
        "name": pattern.name,
        "labels": [str(label) for label in pattern.labels],
        "edges": [
            [str(pattern.labels[src]), str(pattern.labels[dst]), relation.value]
            for src, dst, relation in pattern.edges
        ],
        "repeats": pattern.repeats,
        "layout": {str(i): list(slot) for i, slot in sorted(layout.items())},
        "carriers": carriers,
    }


def graphs_from_rows(
    rows: Iterable[tuple[str, str, float, float]],
    kb: KnowledgeBase,
    max_gap: float,
    split_gap: float | None,
) -> list[InteractionGraph]:
    """Run raw rows through abstraction and graph construction (the same
    path the pipeline uses), one graph per object."""
    per_object: dict[str, dict[str, list[tuple[float, float]]]] = {}
    for object_id, variable, t, v in rows:
        per_object.setdefault(object_id, {}).setdefault(variable, []).append((t, v))
    graphs = []
    for object_id in sorted(per_object):
        templates: list[Template] = []
        for variable in sorted(per_object[object_id]):
            series = sorted(per_object[object_id][variable])
            templates.extend(
                abstract_variable(variable, series, kb[variable], split_gap)
            )
        graphs.append(build_graph(object_id, templates, max_gap))
    return graphs


def _verify(
    result: SynthResult, spec: SynthSpec, planted: Sequence[PlantedPattern]
) -> None:
    interpretations = {p.name: p.expected_interpretation() for p in planted}
    planted_names = [p.name for p in planted]
    carriers = {
        p["name"]: set(p["carriers"])
        for p in result.manifest["patterns"]["planted"]
    }
    pos_graphs = {
        g.object_id: g
        for g in graphs_from_rows(
            result.rows_pos, spec.kb, spec.max_gap, spec.split_gap
        )
    }
    for name in planted_names:
        pattern = interpretations[name]
        for object_id in sorted(carriers[name]):
            if not matches(pos_graphs[object_id], pattern):
                raise PlantVerificationError(
                    f"pattern {name} not recovered in carrier {object_id}"
                )
    if result.rows_neg:
        neg_graphs = graphs_from_rows(
            result.rows_neg, spec.kb, spec.max_gap, spec.split_gap
        )
        leaks = 0
        for graph in neg_graphs:
            if any(matches(graph, interpretations[name]) for name in planted_names):
                leaks += 1
        if leaks > spec.leak_tolerance * len(neg_graphs):
            raise PlantVerificationError(
                f"planted patterns leaked into {leaks} negative objects"
            )


def generate(spec: SynthSpec, verify: bool = True) -> SynthResult:
    """Generate both cohorts plus a ground-truth manifest, deterministically
    from the spec seed. With ``verify`` the result is round-tripped through
    abstraction and graph construction before being returned."""
    planted = [p.normalized() for p in spec.planted]
    common = [p.normalized() for p in spec.common]
    if not planted:
        raise ValueError("spec.planted must not be empty")
    for pattern in planted + common:
        for label in pattern.labels:
            if label.variable not in spec.kb:
                raise InfeasiblePlant(
                    f"{pattern.name}: variable {label.variable!r} not in the "
                    f"knowledge base"
                )
    unit = spec.layout_unit
    motifs_planted = [_Motif(p, solve_layout(p, unit)) for p in planted]
    motifs_common = [_Motif(p, solve_layout(p, unit)) for p in common]

    master = np.random.SeedSequence(spec.seed)
    seq_assign, seq_pos, seq_neg = master.spawn(3)
    rng_assign = np.random.default_rng(seq_assign)
    plant_carriers = _assign_carriers(
        rng_assign, spec.n_pos, len(planted), spec.plant_rate
    )
    common_carriers_pos = _assign_carriers(
        rng_assign, spec.n_pos, len(common), spec.common_rate
    )
    common_carriers_neg = (
        _assign_carriers(rng_assign, spec.n_neg, len(common), spec.common_rate)
        if spec.n_neg
        else [set() for _ in common]
    )

    pos_ids = [f"pos-{i:04d}" for i in range(spec.n_pos)]
    neg_ids = [f"neg-{i:04d}" for i in range(spec.n_neg)]

    rows_pos: list[tuple[str, str, float, float]] = []
    for i, object_id in enumerate(pos_ids):
        rng = np.random.default_rng(seq_pos.spawn(1)[0])
        motifs = [m for j, m in enumerate(motifs_planted) if i in plant_carriers[j]]
        motifs += [
            m for j, m in enumerate(motifs_common) if i in common_carriers_pos[j]
        ]
        rows_pos.extend(_object_rows(rng, object_id, motifs, spec))

    rows_neg: list[tuple[str, str, float, float]] = []
    for i, object_id in enumerate(neg_ids):
        rng = np.random.default_rng(seq_neg.spawn(1)[0])
        motifs = [
            m for j, m in enumerate(motifs_common) if i in common_carriers_neg[j]
        ]
        rows_neg.extend(_object_rows(rng, object_id, motifs, spec))

    manifest = {
        "seed": spec.seed,
        "n_pos": spec.n_pos,
        "n_neg": spec.n_neg,
        "plant_rate": spec.plant_rate,
        "common_rate": spec.common_rate,
        "max_gap": spec.max_gap,
        "split_gap": spec.split_gap,
        "patterns": {
            "planted": [
                _pattern_manifest(
                    planted[j],
                    motifs_planted[j].layout,
                    [pos_ids[i] for i in sorted(plant_carriers[j])],
                )
                for j in range(len(planted))
            ],
            "common": [
                _pattern_manifest(
                    common[j],
                    motifs_common[j].layout,
                    [pos_ids[i] for i in sorted(common_carriers_pos[j])]
                    + [neg_ids[i] for i in sorted(common_carriers_neg[j])],
                )
                for j in range(len(common))
            ],
        },
        "recommended": {
            "max_gap": spec.max_gap,
            "split_gap": spec.split_gap,
            "k_max": 3,
            "min_support": 0.3,
        },
    }
    result = SynthResult(rows_pos, rows_neg, manifest)
    if verify:
        _verify(result, spec, planted)
    return result


def write_rows_csv(rows: Iterable[tuple[str, str, float, float]], path) -> None:
    with open(path, "w") as handle:
        handle.write("object_id,variable,timestamp,value\n")
        for object_id, variable, t, v in rows:
            handle.write(f"{object_id},{variable},{t!r},{v!r}\n")


_DEMO_KINDS = (
    (State.HIGH, Gradient.STABLE),
    (State.LOW, Gradient.STABLE),
    (State.HIGH, Gradient.INCREASING),
    (State.LOW, Gradient.DECREASING),
)

_DEMO_SHAPES = (
    ((0, 2, Relation.DURING), (1, 2, Relation.DURING), (0, 1, Relation.PRECEDES)),
    ((0, 1, Relation.OVERLAPS), (1, 2, Relation.OVERLAPS)),
    ((0, 2, Relation.STARTS), (1, 2, Relation.FINISHES)),
    ((0, 1, Relation.EQUALS), (0, 2, Relation.DURING), (1, 2, Relation.DURING)),
    ((0, 1, Relation.MEETS), (1, 2, Relation.MEETS)),
)


def make_demo_spec(
    n_pos: int = 200,
    n_neg: int = 200,
    n_planted: int = 5,
    n_common: int = 20,
    seed: int = 7,
    kb: KnowledgeBase | None = None,
) -> SynthSpec:
    """Cohort spec with label-disjoint three-node patterns: planted patterns
    occur once per carrier (edge weight 1) while common nuisance patterns
    repeat three times (edge weight 3), which is what makes them separable
    under the low-weight preference of the prior."""
    if kb is None:
        kb = KnowledgeBase.default()
    variables = sorted(kb.rules)
    pool = [
        TemplateLabel(variable, state, gradient)
        for state, gradient in _DEMO_KINDS
        for variable in variables
    ]
    needed = 3 * (n_planted + n_common)
    if needed > len(pool):
        raise ValueError(
            f"label pool supports at most {len(pool) // 3} patterns, "
            f"requested {n_planted + n_common}"
        )
    patterns = []
    for index in range(n_planted + n_common):
        labels = tuple(pool[3 * index : 3 * index + 3])
        shape = _DEMO_SHAPES[index % len(_DEMO_SHAPES)]
        if index < n_planted:
            patterns.append(
                PlantedPattern(f"planted-{index:02d}", labels, shape, repeats=1)
            )
        else:
            patterns.append(
                PlantedPattern(
                    f"common-{index - n_planted:02d}", labels, shape, repeats=3
                )
            )
    return SynthSpec(
        n_pos=n_pos,
        n_neg=n_neg,
        kb=kb,
        planted=tuple(patterns[:n_planted]),
        plant_rate=0.9,
        common=tuple(patterns[n_planted:]),
        common_rate=0.9,
        seed=seed,
    )
