"""Pipeline stages: ingestion, abstraction, graph building, discovery,
prevalence, feature export, and the end-to-end run.

Every stage persists its output so later stages can resume from disk, and
the full run records a manifest (config, seed, version, artifact digests).
Re-running with the same inputs and seed reproduces every artifact
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .abstraction import (
    KnowledgeBase,
    Template,
    UnknownVariable,
    abstract_variable,
)
from .config import PipelineConfig, config_to_dict
from .discovery import (
    Candidate,
    DiscoveryResult,
    PriorParams,
    cluster_population,
    generate_candidates,
    run_em,
    sample_significant,
)
from .features import featurize, prevalence
from .graph import (
    InteractionGraph,
    TemplateLabel,
    build_graph,
    read_jsonl,
    write_jsonl,
)
from .intervals import Interval
from .lexicon import Lexicon, build_lexicon, encode, save_manifest
from .report import (
    save_prevalence_figure,
    save_similarity_figure,
    save_trace_figure,
)
from .similarity import pairwise_matrix, write_matrix_csv

logger = logging.getLogger("quint")

Streams = dict[str, dict[str, list[tuple[float, float]]]]


class ParseError(ValueError):
    """Malformed input row; message carries the line number."""


class EmptyInput(ValueError):
    """The input file contains no data rows."""


def _parse_timestamp(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        parsed = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"not epoch seconds or ISO-8601: {raw!r}") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.timestamp()


def ingest(
    csv_path: str | Path,
    kb: KnowledgeBase,
    max_timestamp: float | None = None,
) -> Streams:
    """Parse, validate, sort, and group raw samples.

    Rows are (object_id, variable, timestamp, value); timestamps may be epoch
    seconds or ISO-8601 (naive times are taken as UTC). Unknown variables and
    non-finite values are hard errors; duplicate (object, variable, timestamp)
    rows keep the first occurrence with a warning. ``max_timestamp`` drops
    later records, which implements outcome-window cutoffs.
    """
    streams: Streams = {}
    seen: set[tuple[str, str, float]] = set()
    n_rows = 0
    with open(csv_path, newline="") as handle:
        header = handle.readline().strip()
        if header.replace(" ", "") != "object_id,variable,timestamp,value":
            raise ParseError(
                f"{csv_path}:1: expected header 'object_id,variable,timestamp,value'"
            )
        for lineno, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"{csv_path}:{lineno}: expected 4 fields")
            object_id, variable, raw_t, raw_v = (p.strip() for p in parts)
            if variable not in kb:
                raise UnknownVariable(
                    f"{csv_path}:{lineno}: unknown variable {variable!r}"
                )
            try:
                timestamp = _parse_timestamp(raw_t)
                value = float(raw_v)
            except ValueError as exc:
                raise ParseError(f"{csv_path}:{lineno}: {exc}") from None
            if not math.isfinite(value):
                raise ParseError(f"{csv_path}:{lineno}: non-finite value {raw_v}")
            if timestamp < 0:
                raise ParseError(f"{csv_path}:{lineno}: negative timestamp")
            if max_timestamp is not None and timestamp > max_timestamp:
                continue
            key = (object_id, variable, timestamp)
            if key in seen:
                logger.warning(
                    "%s:%d: duplicate sample %s, keeping first", csv_path, lineno, key
                )
                continue
            seen.add(key)
            streams.setdefault(object_id, {}).setdefault(variable, []).append(
                (timestamp, value)
            )
            n_rows += 1
    if n_rows == 0:
        raise EmptyInput(f"{csv_path}: no data rows")
    for variables in streams.values():
        for series in variables.values():
            series.sort()
    return streams


def _abstract_one(
    args: tuple[str, dict[str, list[tuple[float, float]]], KnowledgeBase, float | None]
) -> tuple[str, list[Template]]:
    object_id, by_variable, kb, split_gap = args
    templates: list[Template] = []
    for variable in sorted(by_variable):
        series = by_variable[variable]
        if len(series) < 2:
            continue
        templates.extend(abstract_variable(variable, series, kb[variable], split_gap))
    return object_id, templates


def _resolve_workers(workers: int) -> int:
    if workers == 0:
        return min(os.cpu_count() or 1, 8)
    return workers


def _map_ordered(worker, items: list, workers: int) -> list:
    n_workers = _resolve_workers(workers)
    if n_workers <= 1 or len(items) <= 1:
        return [worker(item) for item in items]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        chunk = max(1, len(items) // (n_workers * 4))
        return list(pool.map(worker, items, chunksize=chunk))


def abstract_objects(
    streams: Streams,
    kb: KnowledgeBase,
    split_gap: float | None = None,
    workers: int = 1,
) -> dict[str, list[Template]]:
    """Per-object pattern templates; objects are independent so this stage
    parallelizes over them."""
    items = [
        (object_id, streams[object_id], kb, split_gap)
        for object_id in sorted(streams)
    ]
    return dict(_map_ordered(_abstract_one, items, workers))


def _graph_one(
    args: tuple[str, list[Template], float]
) -> InteractionGraph:
    object_id, templates, max_gap = args
    return build_graph(object_id, templates, max_gap)


def graphs_from_templates(
    templates_by_object: dict[str, list[Template]],
    max_gap: float,
    workers: int = 1,
) -> list[InteractionGraph]:
    items = [
        (object_id, templates_by_object[object_id], max_gap)
        for object_id in sorted(templates_by_object)
    ]
    return _map_ordered(_graph_one, items, workers)


def write_templates_jsonl(
    templates_by_object: dict[str, list[Template]], path
) -> None:
    with open(path, "w") as handle:
        for object_id in sorted(templates_by_object):
            payload = {
                "object_id": object_id,
                "templates": [
                    {
                        "label": str(
                            TemplateLabel(t.variable, t.state, t.gradient)
                        ),
                        "occurrences": [[iv.start, iv.end] for iv in t.occurrences],
                    }
                    for t in templates_by_object[object_id]
                ],
            }
            handle.write(json.dumps(payload, sort_keys=True))
            handle.write("\n")


def read_templates_jsonl(path) -> dict[str, list[Template]]:
    out: dict[str, list[Template]] = {}
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            payload = json.loads(line)
            templates = []
            for entry in payload["templates"]:
                label = TemplateLabel.parse(entry["label"])
                templates.append(
                    Template(
                        label.variable,
                        label.state,
                        label.gradient,
                        tuple(Interval(s, e) for s, e in entry["occurrences"]),
                    )
                )
            out[payload["object_id"]] = templates
    return out


def discover(
    graphs: Sequence[InteractionGraph], config: PipelineConfig
) -> tuple[DiscoveryResult, Lexicon, np.ndarray]:
    """Lexicon over observed templates, cohort similarity, spectral
    pre-clustering, candidate generation per cluster, and the EM fit."""
    observed: set[TemplateLabel] = set()
    for graph in graphs:
        observed |= graph.labels()
    lexicon = build_lexicon(
        [], config.k_max, restrict_to=observed, cap=config.lexicon_cap
    )
    fingerprints = [encode(graph, lexicon) for graph in graphs]
    normalization = "max" if config.sym_similarity else "g1"
    matrix = pairwise_matrix(graphs, lexicon, fingerprints, normalization)
    assignments = cluster_population(
        matrix, config.knn_k, config.max_clusters, config.seed
    )
    clusters = {
        graph.object_id: int(assignments[i]) for i, graph in enumerate(graphs)
    }
    groups: dict[int, list[int]] = {}
    for i, label in enumerate(assignments):
        groups.setdefault(int(label), []).append(i)
    candidate_groups = []
    for label in sorted(groups):
        member_idx = groups[label]
        candidate_groups.append(
            generate_candidates(
                [graphs[i] for i in member_idx],
                lexicon,
                config.min_support,
                population=graphs,
                cluster_fps=[fingerprints[i] for i in member_idx],
                population_fps=fingerprints,
                epsilon=config.epsilon,
            )
        )
    result = run_em(
        candidate_groups,
        graphs,
        fingerprints,
        lexicon.n,
        clusters,
        init=PriorParams(*config.lambda_init),
        tol=config.tol,
        max_iter=config.max_iter,
        lambda_cap=config.lambda_cap,
        seed=config.seed,
    )
    return result, lexicon, matrix


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def load_kb(config: PipelineConfig) -> KnowledgeBase:
    if config.kb_path is None:
        return KnowledgeBase.default()
    return KnowledgeBase.from_csv(config.kb_path)


def run_pipeline(
    config: PipelineConfig,
    pos_csv: str | Path,
    neg_csv: str | Path,
    out_dir: str | Path,
) -> dict:
    """Full pipeline: ingest both cohorts, abstract, build graphs, discover on
    the positive cohort, then report prevalence and export features.

    Persists every intermediate under ``out_dir`` and writes a run manifest
    with SHA-256 digests of all artifacts. Partial outputs are removed if a
    stage fails.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []

    def track(name: str) -> Path:
        path = out / name
        created.append(path)
        return path

    try:
        kb = load_kb(config)
        graphs: dict[str, list[InteractionGraph]] = {}
        for cohort, csv_path in (("pos", pos_csv), ("neg", neg_csv)):
            streams = ingest(csv_path, kb, config.max_timestamp)
            templates = abstract_objects(
                streams, kb, config.split_gap, config.workers
            )
            write_templates_jsonl(templates, track(f"templates_{cohort}.jsonl"))
            cohort_graphs = graphs_from_templates(
                templates, config.max_gap, config.workers
            )
            write_jsonl(cohort_graphs, track(f"graphs_{cohort}.jsonl"))
            graphs[cohort] = cohort_graphs

        result, lexicon, matrix = discover(graphs["pos"], config)
        save_manifest(lexicon, track("lexicon.json"))
        result.save(track("discovery.json"))
        save_trace_figure(result.trace, track("qtrace.png"))
        if config.dump_similarity:
            write_matrix_csv(
                matrix,
                [g.object_id for g in graphs["pos"]],
                track("similarity.csv"),
            )
            save_similarity_figure(matrix, track("similarity.png"))

        patterns = sample_significant(result, config.sample_rate)
        report = prevalence(
            patterns, graphs["pos"], graphs["neg"], config.d_max, config.w_slack
        )
        report.save_json(track("prevalence.json"))
        report.save_csv(track("prevalence.csv"))
        save_prevalence_figure(report, track("prevalence.png"))

        cohort_all = graphs["pos"] + graphs["neg"]
        labels = [1] * len(graphs["pos"]) + [0] * len(graphs["neg"])
        features = featurize(
            cohort_all,
            patterns,
            labels=labels,
            d_max=config.d_max,
            w_slack=config.w_slack,
            counts=config.count_features,
        )
        features.save_csv(track("features.csv"))

        manifest = {
            "version": __version__,
            "seed": config.seed,
            "config": config_to_dict(config),
            "inputs": {"pos": str(pos_csv), "neg": str(neg_csv)},
            "artifacts": {
                path.name: _sha256(path) for path in sorted(created)
            },
        }
        manifest_path = out / "run_manifest.json"
        with open(manifest_path, "w") as handle:
            json.dump(manifest, handle, sort_keys=True, indent=2)
            handle.write("\n")
        return manifest
    except Exception:
        for path in created:
            if path.exists():
                path.unlink()
        raise


def load_graphs(path: str | Path) -> list[InteractionGraph]:
    return list(read_jsonl(path))
