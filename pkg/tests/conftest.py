import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("ci")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: end-to-end acceptance criteria (slow)"
    )


@pytest.fixture(scope="session")
def demo_cohort():
    """Shared full-scale synthetic cohort: generated once, reused by the
    discovery/prevalence/feature acceptance criteria."""
    import time

    from quint.config import PipelineConfig
    from quint.pipeline import discover
    from quint.synth import generate, graphs_from_rows, make_demo_spec

    started = time.perf_counter()
    spec = make_demo_spec(n_pos=200, n_neg=200, seed=7)
    result = generate(spec, verify=False)  # criterion 11 verifies explicitly
    pos_graphs = graphs_from_rows(
        result.rows_pos, spec.kb, spec.max_gap, spec.split_gap
    )
    neg_graphs = graphs_from_rows(
        result.rows_neg, spec.kb, spec.max_gap, spec.split_gap
    )
    config = PipelineConfig(k_max=3, split_gap=spec.split_gap, seed=1)
    discovery_result, lexicon, matrix = discover(pos_graphs, config)
    elapsed = time.perf_counter() - started
    return {
        "spec": spec,
        "synth": result,
        "pos_graphs": pos_graphs,
        "neg_graphs": neg_graphs,
        "config": config,
        "discovery": discovery_result,
        "lexicon": lexicon,
        "matrix": matrix,
        "elapsed": elapsed,
    }
