"""State/gradient interval abstraction of raw per-variable sample streams.

A sample stream is labeled sample-by-sample against per-variable cutoffs,
maximal runs of equal labels become intervals, and the pairwise intersection
of the state and gradient tilings yields qualitative patterns. Patterns with
the same (state, gradient) pair aggregate into a pattern template carrying
all occurrence intervals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .intervals import Interval


class State(Enum):
    LOW = "Low"
    NORMAL = "Norm"
    HIGH = "Hi"

    def __str__(self) -> str:
        return self.value


class Gradient(Enum):
    DECREASING = "Dec"
    STABLE = "Stab"
    INCREASING = "Inc"

    def __str__(self) -> str:
        return self.value


class SeriesTooShort(ValueError):
    """Series with fewer than two samples yield no intervals."""


class SpanMismatch(ValueError):
    """State and gradient tilings disagree on the span they cover."""


class UnknownVariable(KeyError):
    """A sample refers to a variable absent from the knowledge base."""


@dataclass(frozen=True)
class RawSample:
    object_id: str
    variable: str
    timestamp: float
    value: float


@dataclass(frozen=True)
class VariableRule:
    """Cutoffs for one variable: closed normal range plus gradient delta."""

    normal_low: float
    normal_high: float
    gradient_delta: float

    def __post_init__(self) -> None:
        if not self.normal_low < self.normal_high:
            raise ValueError(
                f"normal_low must be < normal_high, got "
                f"[{self.normal_low}, {self.normal_high}]"
            )
        if not self.gradient_delta > 0:
            raise ValueError(f"gradient_delta must be > 0, got {self.gradient_delta}")

    def state_of(self, value: float) -> State:
        # Ties at either cutoff count as Normal (closed normal range).
        if value < self.normal_low:
            return State.LOW
        if value > self.normal_high:
            return State.HIGH
        return State.NORMAL

    def gradient_of(self, delta: float) -> Gradient:
        if delta > self.gradient_delta:
            return Gradient.INCREASING
        if delta < -self.gradient_delta:
            return Gradient.DECREASING
        return Gradient.STABLE


@dataclass
class KnowledgeBase:
    rules: dict[str, VariableRule] = field(default_factory=dict)

    def __contains__(self, variable: str) -> bool:
        return variable in self.rules

    def __getitem__(self, variable: str) -> VariableRule:
        try:
            return self.rules[variable]
        except KeyError:
            raise UnknownVariable(variable) from None

    @classmethod
    def from_csv(cls, path: str | Path) -> "KnowledgeBase":
        """Load rules from delimited text with a header row:
        variable,normal_low,normal_high,gradient_delta."""
        rules: dict[str, VariableRule] = {}
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            expected = {"variable", "normal_low", "normal_high", "gradient_delta"}
            if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
                raise ValueError(
                    f"knowledge base {path} must have columns {sorted(expected)}"
                )
            for row in reader:
                name = row["variable"].strip()
                if name in rules:
                    raise ValueError(f"duplicate knowledge-base entry for {name!r}")
                rules[name] = VariableRule(
                    normal_low=float(row["normal_low"]),
                    normal_high=float(row["normal_high"]),
                    gradient_delta=float(row["gradient_delta"]),
                )
        return cls(rules)

    @classmethod
    def default(cls) -> "KnowledgeBase":
        """The ICU vitals/labs knowledge base shipped with the package."""
        with resources.as_file(
            resources.files("quint").joinpath("data/knowledge_base.csv")
        ) as path:
            return cls.from_csv(path)


@dataclass(frozen=True)
class Pattern:
    """Maximal interval over which one variable holds a fixed state and gradient."""

    variable: str
    state: State
    gradient: Gradient
    interval: Interval


@dataclass(frozen=True)
class Template:
    """A variable's unique (state, gradient) descriptor with all its occurrences."""

    variable: str
    state: State
    gradient: Gradient
    occurrences: tuple[Interval, ...]


def _check_series(series: list[tuple[float, float]]) -> None:
    if len(series) < 2:
        raise SeriesTooShort(f"need >= 2 samples, got {len(series)}")
    for (t0, _), (t1, _) in zip(series, series[1:]):
        if not t0 < t1:
            raise ValueError(f"timestamps must be strictly increasing ({t0} !< {t1})")
    for t, v in series:
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v} at t={t}")


def _merge_runs(runs: list[tuple[object, float, float]]) -> list:
    """Drop zero-length runs (float-collapsed boundaries) and re-merge any
    equal-label neighbors that uncovers, preserving an exact tiling."""
    merged: list[list] = []
    for label, start, end in runs:
        if not start < end:
            continue
        if merged and merged[-1][0] == label and merged[-1][2] == start:
            merged[-1][2] = end
        else:
            merged.append([label, start, end])
    return [(label, Interval(start, end)) for label, start, end in merged]


def state_abstract(
    series: list[tuple[float, float]], rule: VariableRule
) -> list[tuple[State, Interval]]:
    """Tile [t_first, t_last] with maximal constant-state intervals.

    Boundaries between runs of differing labels sit at the midpoint of the two
    adjacent samples; the first and last intervals snap to the first and last
    sample timestamps.
    """
    _check_series(series)
    labels = [rule.state_of(v) for _, v in series]
    runs: list[tuple[State, float, float]] = []
    run_start = series[0][0]
    for i in range(1, len(series)):
        if labels[i] != labels[i - 1]:
            boundary = (series[i - 1][0] + series[i][0]) / 2.0
            runs.append((labels[i - 1], run_start, boundary))
            run_start = boundary
    runs.append((labels[-1], run_start, series[-1][0]))
    return _merge_runs(runs)


def gradient_abstract(
    series: list[tuple[float, float]], rule: VariableRule
) -> list[tuple[Gradient, Interval]]:
    """Tile [t_first, t_last] with maximal constant-gradient intervals.

    Each gap between consecutive samples is labeled from the value delta; runs
    of equally labeled gaps span from the first sample of the first gap to the
    last sample of the last gap.
    """
    _check_series(series)
    gaps = [
        rule.gradient_of(series[i + 1][1] - series[i][1])
        for i in range(len(series) - 1)
    ]
    out: list[tuple[Gradient, Interval]] = []
    run_start = series[0][0]
    for i in range(1, len(gaps)):
        if gaps[i] != gaps[i - 1]:
            boundary = series[i][0]
            out.append((gaps[i - 1], Interval(run_start, boundary)))
            run_start = boundary
    out.append((gaps[-1], Interval(run_start, series[-1][0])))
    return out


def make_patterns(
    variable: str,
    states: list[tuple[State, Interval]],
    gradients: list[tuple[Gradient, Interval]],
) -> list[Pattern]:
    """Intersect the state and gradient tilings into joint patterns.

    Both tilings must cover the same span; zero-length intersections are
    dropped, so the output again tiles the span with no gaps or overlaps.
    """
    if not states or not gradients:
        return []
    span_s = (states[0][1].start, states[-1][1].end)
    span_g = (gradients[0][1].start, gradients[-1][1].end)
    if span_s != span_g:
        raise SpanMismatch(f"state span {span_s} != gradient span {span_g}")
    patterns: list[Pattern] = []
    gi = 0
    for state, s_iv in states:
        while gi < len(gradients) and gradients[gi][1].end <= s_iv.start:
            gi += 1
        gj = gi
        while gj < len(gradients) and gradients[gj][1].start < s_iv.end:
            gradient, g_iv = gradients[gj]
            lo = max(s_iv.start, g_iv.start)
            hi = min(s_iv.end, g_iv.end)
            if lo < hi:
                patterns.append(Pattern(variable, state, gradient, Interval(lo, hi)))
            gj += 1
    patterns.sort(key=lambda p: p.interval.start)
    return patterns


def make_templates(patterns: list[Pattern]) -> list[Template]:
    """Group one variable's patterns by (state, gradient), occurrences sorted."""
    grouped: dict[tuple[str, State, Gradient], list[Interval]] = {}
    for p in patterns:
        grouped.setdefault((p.variable, p.state, p.gradient), []).append(p.interval)
    templates = [
        Template(var, state, gradient, tuple(sorted(ivs)))
        for (var, state, gradient), ivs in grouped.items()
    ]
    templates.sort(key=lambda t: (t.variable, t.state.value, t.gradient.value))
    return templates


def split_on_gaps(
    series: list[tuple[float, float]], max_sampling_gap: float | None
) -> list[list[tuple[float, float]]]:
    """Split a series wherever consecutive samples are more than
    ``max_sampling_gap`` apart. ``None`` disables splitting."""
    if max_sampling_gap is None:
        return [series]
    segments: list[list[tuple[float, float]]] = []
    current: list[tuple[float, float]] = []
    for sample in series:
        if current and sample[0] - current[-1][0] > max_sampling_gap:
            segments.append(current)
            current = []
        current.append(sample)
    if current:
        segments.append(current)
    return segments


def abstract_variable(
    variable: str,
    series: list[tuple[float, float]],
    rule: VariableRule,
    max_sampling_gap: float | None = None,
) -> list[Template]:
    """Full abstraction of one variable's stream into pattern templates.

    Segments shorter than two samples (including after gap splitting) are
    skipped: the variable simply contributes no patterns there.
    """
    patterns: list[Pattern] = []
    for segment in split_on_gaps(series, max_sampling_gap):
        if len(segment) < 2:
            continue
        states = state_abstract(segment, rule)
        gradients = gradient_abstract(segment, rule)
        patterns.extend(make_patterns(variable, states, gradients))
    return make_templates(patterns)
