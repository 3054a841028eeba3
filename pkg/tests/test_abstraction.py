import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from quint.abstraction import (
    Gradient,
    KnowledgeBase,
    SeriesTooShort,
    SpanMismatch,
    State,
    VariableRule,
    abstract_variable,
    gradient_abstract,
    make_patterns,
    make_templates,
    split_on_gaps,
    state_abstract,
)

TEMP = VariableRule(36.0, 38.0, 0.5)


# A body-temperature series shaped to produce the six-pattern / five-template
# reference configuration: Dec-Low, Stab-Low, Dec-Low, Inc-Low, Inc-Norm,
# Inc-Hi, with Dec-Low occurring twice.
FIG_SERIES = [
    (0.0, 35.5),
    (10.0, 34.8),
    (20.0, 34.2),
    (30.0, 34.1),
    (40.0, 34.3),
    (50.0, 33.5),
    (60.0, 34.4),
    (70.0, 35.9),
    (80.0, 37.0),
    (90.0, 38.6),
]


def test_state_abstract_worked_example():
    series = [(0.0, 36.5), (10.0, 37.0), (20.0, 38.6), (30.0, 38.9)]
    result = state_abstract(series, TEMP)
    assert [(s, iv.start, iv.end) for s, iv in result] == [
        (State.NORMAL, 0.0, 15.0),
        (State.HIGH, 15.0, 30.0),
    ]


def test_state_abstract_single_run():
    series = [(0.0, 36.5), (5.0, 37.5), (11.0, 37.9)]
    result = state_abstract(series, TEMP)
    assert [(s, iv.start, iv.end) for s, iv in result] == [(State.NORMAL, 0.0, 11.0)]


def test_state_cutoff_ties_are_normal():
    series = [(0.0, 38.0), (10.0, 36.0)]
    result = state_abstract(series, TEMP)
    assert [s for s, _ in result] == [State.NORMAL]


def test_gradient_abstract_worked_example():
    series = [(0.0, 36.0), (10.0, 36.2), (20.0, 37.5)]
    result = gradient_abstract(series, TEMP)
    assert [(g, iv.start, iv.end) for g, iv in result] == [
        (Gradient.STABLE, 0.0, 10.0),
        (Gradient.INCREASING, 10.0, 20.0),
    ]


def test_gradient_flat_series_single_interval():
    series = [(0.0, 37.0), (7.0, 37.1), (19.0, 36.9), (25.0, 37.0)]
    result = gradient_abstract(series, TEMP)
    assert [(g, iv.start, iv.end) for g, iv in result] == [
        (Gradient.STABLE, 0.0, 25.0)
    ]


def test_gradient_alternating_jumps():
    series = [(0.0, 37.0), (1.0, 38.1), (2.0, 37.0), (3.0, 38.1)]
    result = gradient_abstract(series, TEMP)
    assert [g for g, _ in result] == [
        Gradient.INCREASING,
        Gradient.DECREASING,
        Gradient.INCREASING,
    ]
    assert [(iv.start, iv.end) for _, iv in result] == [(0, 1), (1, 2), (2, 3)]


def test_series_too_short():
    with pytest.raises(SeriesTooShort):
        state_abstract([(0.0, 37.0)], TEMP)
    with pytest.raises(SeriesTooShort):
        gradient_abstract([], TEMP)


def test_span_mismatch_rejected():
    states = state_abstract([(0.0, 36.5), (10.0, 36.6)], TEMP)
    gradients = gradient_abstract([(0.0, 36.5), (12.0, 36.6)], TEMP)
    with pytest.raises(SpanMismatch):
        make_patterns("Temp", states, gradients)


def test_six_patterns_five_templates_reference_fixture():
    states = state_abstract(FIG_SERIES, TEMP)
    gradients = gradient_abstract(FIG_SERIES, TEMP)
    patterns = make_patterns("Temp", states, gradients)
    assert len(patterns) == 6
    sequence = [(p.gradient, p.state) for p in patterns]
    assert sequence == [
        (Gradient.DECREASING, State.LOW),
        (Gradient.STABLE, State.LOW),
        (Gradient.DECREASING, State.LOW),
        (Gradient.INCREASING, State.LOW),
        (Gradient.INCREASING, State.NORMAL),
        (Gradient.INCREASING, State.HIGH),
    ]
    templates = make_templates(patterns)
    assert len(templates) == 5
    by_key = {(t.gradient, t.state): t for t in templates}
    assert len(by_key[(Gradient.DECREASING, State.LOW)].occurrences) == 2
    for key in [
        (Gradient.INCREASING, State.LOW),
        (Gradient.INCREASING, State.NORMAL),
        (Gradient.INCREASING, State.HIGH),
        (Gradient.STABLE, State.LOW),
    ]:
        assert len(by_key[key].occurrences) == 1


def test_single_gradient_crossing_three_states():
    series = [(0.0, 35.0), (10.0, 36.5), (20.0, 38.01), (30.0, 39.5)]
    states = state_abstract(series, TEMP)
    gradients = gradient_abstract(series, TEMP)
    assert [g for g, _ in gradients] == [Gradient.INCREASING]
    patterns = make_patterns("Temp", states, gradients)
    assert [(p.gradient, p.state) for p in patterns] == [
        (Gradient.INCREASING, State.LOW),
        (Gradient.INCREASING, State.NORMAL),
        (Gradient.INCREASING, State.HIGH),
    ]


series_strategy = st.lists(
    st.tuples(
        st.floats(0, 10_000, allow_nan=False, allow_infinity=False),
        st.floats(20, 45, allow_nan=False, allow_infinity=False),
    ),
    min_size=2,
    max_size=40,
    unique_by=lambda s: s[0],
).map(lambda samples: sorted(samples))


@given(series_strategy)
def test_tilings_partition_the_span(samples):
    states = state_abstract(samples, TEMP)
    gradients = gradient_abstract(samples, TEMP)
    span = samples[-1][0] - samples[0][0]
    for tiling in (states, gradients):
        assert tiling[0][1].start == samples[0][0]
        assert tiling[-1][1].end == samples[-1][0]
        for (_, left), (_, right) in zip(tiling, tiling[1:]):
            assert left.end == right.start
        total = sum(iv.length for _, iv in tiling)
        assert math.isclose(total, span, abs_tol=1e-9)


@given(series_strategy)
def test_maximality_adjacent_labels_differ(samples):
    states = state_abstract(samples, TEMP)
    gradients = gradient_abstract(samples, TEMP)
    assert all(a[0] != b[0] for a, b in zip(states, states[1:]))
    assert all(a[0] != b[0] for a, b in zip(gradients, gradients[1:]))
    patterns = make_patterns("Temp", states, gradients)
    for left, right in zip(patterns, patterns[1:]):
        assert left.interval.end == right.interval.start
        assert (left.state, left.gradient) != (right.state, right.gradient)


@given(series_strategy)
def test_abstraction_is_input_order_insensitive(samples):
    shuffled = list(reversed(samples))
    direct = abstract_variable("Temp", samples, TEMP)
    resorted = abstract_variable("Temp", sorted(shuffled), TEMP)
    assert direct == resorted


@given(series_strategy)
def test_template_occurrences_count_patterns(samples):
    states = state_abstract(samples, TEMP)
    gradients = gradient_abstract(samples, TEMP)
    patterns = make_patterns("Temp", states, gradients)
    templates = make_templates(patterns)
    assert sum(len(t.occurrences) for t in templates) == len(patterns)
    for template in templates:
        matching = [
            p
            for p in patterns
            if (p.state, p.gradient) == (template.state, template.gradient)
        ]
        assert tuple(sorted(p.interval for p in matching)) == template.occurrences


def test_split_on_gaps():
    series = [(0.0, 37.0), (10.0, 37.1), (5000.0, 37.0), (5010.0, 37.2)]
    segments = split_on_gaps(series, 3600.0)
    assert [len(s) for s in segments] == [2, 2]
    assert split_on_gaps(series, None) == [series]


def test_abstract_variable_skips_short_segments():
    series = [(0.0, 37.0), (10.0, 37.1), (9000.0, 39.0)]
    templates = abstract_variable("Temp", series, TEMP, max_sampling_gap=3600.0)
    # the lone trailing sample forms no interval
    assert all(
        all(iv.end <= 10.0 for iv in t.occurrences) for t in templates
    )


def test_knowledge_base_loading(tmp_path):
    path = tmp_path / "kb.csv"
    path.write_text(
        "variable,normal_low,normal_high,gradient_delta\n"
        "Temp,36,38,0.5\n"
        "HR,60,80,10\n"
    )
    kb = KnowledgeBase.from_csv(path)
    assert kb["Temp"].normal_high == 38
    assert "HR" in kb
    with pytest.raises(KeyError):
        kb["SpO2"]


def test_default_knowledge_base_contents():
    kb = KnowledgeBase.default()
    assert kb["Body Temperature"] == VariableRule(36, 38, 0.5)
    assert kb["Heart Rate"] == VariableRule(60, 80, 10)
    # transcribed as printed, including the unusual coma-scale range
    assert kb["Glasgow Coma Scale"] == VariableRule(8, 12, 2)
    # the PCO2/PaCO2 alias is collapsed to a single entry
    assert kb["PCO2"] == VariableRule(38, 42, 2)
    assert len(kb.rules) == 22


def test_rule_validation():
    with pytest.raises(ValueError):
        VariableRule(38, 36, 0.5)
    with pytest.raises(ValueError):
        VariableRule(36, 38, 0)
