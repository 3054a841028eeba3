"""Command-line pipeline driver.

Subcommands mirror the pipeline stages (synth, abstract, build-graphs,
discover, prevalence, featurize) plus `run` for the whole chain. All
diagnostics go to stderr; data lands in files only. Exit codes: 0 success,
2 usage/config, 3 parse, 4 unknown variable, 5 empty input, 6 infeasible or
failed plant, 7 discovery/lexicon errors, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .abstraction import SeriesTooShort, SpanMismatch, UnknownVariable
from .config import ConfigError, resolve_config
from .discovery import DiscoveryResult, NoCandidates, NonFiniteScore, sample_significant
from .features import DuplicateObjectId, featurize, prevalence
from .graph import write_jsonl
from .lexicon import LexiconTooLarge, UniverseMismatch, save_manifest
from .pipeline import (
    EmptyInput,
    ParseError,
    abstract_objects,
    discover,
    graphs_from_templates,
    ingest,
    load_graphs,
    load_kb,
    read_templates_jsonl,
    run_pipeline,
    write_templates_jsonl,
)
from .report import save_prevalence_figure, save_similarity_figure, save_trace_figure
from .similarity import write_matrix_csv
from .synth import (
    InfeasiblePlant,
    PlantVerificationError,
    generate,
    make_demo_spec,
    write_rows_csv,
)

_EXIT_CODES: tuple[tuple[type, int], ...] = (
    (ConfigError, 2),
    (ParseError, 3),
    (UnknownVariable, 4),
    (EmptyInput, 5),
    (InfeasiblePlant, 6),
    (PlantVerificationError, 6),
    (NoCandidates, 7),
    (NonFiniteScore, 7),
    (LexiconTooLarge, 7),
    (UniverseMismatch, 7),
    (SeriesTooShort, 3),
    (SpanMismatch, 3),
    (DuplicateObjectId, 3),
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--kb", dest="kb_path", help="knowledge base CSV")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes for per-object stages (0 = auto)")
    parser.add_argument("--output-dir", default=".", help="artifact directory")


def _config_from_args(args: argparse.Namespace, **extra):
    keys = (
        "kb_path", "max_gap", "split_gap", "max_timestamp", "k_max",
        "lexicon_cap", "min_support", "tol", "max_iter", "lambda_cap",
        "sample_rate", "d_max", "w_slack", "epsilon", "knn_k", "max_clusters",
        "seed", "workers",
    )
    overrides = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    if getattr(args, "lambda_init", None) is not None:
        parts = [float(p) for p in args.lambda_init.split(",")]
        if len(parts) != 3:
            raise ConfigError("--lambda-init needs three comma-separated values")
        overrides["lambda_init"] = tuple(parts)
    for flag in ("sym_similarity", "count_features", "dump_similarity"):
        if getattr(args, flag, False):
            overrides[flag] = True
    overrides.update(extra)
    return resolve_config(args.config, **overrides)


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 7
    spec = make_demo_spec(
        n_pos=args.n_pos,
        n_neg=args.n_neg,
        n_planted=args.n_planted,
        n_common=args.n_common,
        seed=seed,
    )
    result = generate(spec, verify=not args.no_verify)
    write_rows_csv(result.rows_pos, out / "pos.csv")
    write_rows_csv(result.rows_neg, out / "neg.csv")
    with open(out / "truth.json", "w") as handle:
        json.dump(result.manifest, handle, sort_keys=True, indent=2)
        handle.write("\n")
    logging.info("wrote %s, %s, %s", out / "pos.csv", out / "neg.csv", out / "truth.json")
    return 0


def _cmd_abstract(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    kb = load_kb(config)
    streams = ingest(args.input, kb, config.max_timestamp)
    templates = abstract_objects(streams, kb, config.split_gap, config.workers)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_templates_jsonl(templates, out / args.output)
    return 0


def _cmd_build_graphs(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    templates = read_templates_jsonl(args.templates)
    graphs = graphs_from_templates(templates, config.max_gap, config.workers)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(graphs, out / args.output)
    return 0


def _cmd_discover(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    graphs = load_graphs(args.graphs)
    result, lexicon, matrix = discover(graphs, config)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(lexicon, out / "lexicon.json")
    result.save(out / "discovery.json")
    save_trace_figure(result.trace, out / "qtrace.png")
    if config.dump_similarity:
        write_matrix_csv(matrix, [g.object_id for g in graphs], out / "similarity.csv")
        save_similarity_figure(matrix, out / "similarity.png")
    return 0


def _cmd_prevalence(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = DiscoveryResult.load(args.discovery)
    patterns = sample_significant(result, config.sample_rate)
    pos = load_graphs(args.pos_graphs)
    neg = load_graphs(args.neg_graphs)
    report = prevalence(patterns, pos, neg, config.d_max, config.w_slack)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save_json(out / "prevalence.json")
    report.save_csv(out / "prevalence.csv")
    save_prevalence_figure(report, out / "prevalence.png")
    print(report.table(), file=sys.stderr)
    return 0


def _cmd_featurize(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = DiscoveryResult.load(args.discovery)
    patterns = sample_significant(result, config.sample_rate)
    pos = load_graphs(args.pos_graphs)
    neg = load_graphs(args.neg_graphs) if args.neg_graphs else []
    cohort = pos + neg
    labels = [1] * len(pos) + [0] * len(neg) if neg else None
    matrix = featurize(
        cohort, patterns, labels, config.d_max, config.w_slack,
        counts=config.count_features,
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix.save_csv(out / args.output)
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    manifest = run_pipeline(config, args.pos, args.neg, args.output_dir)
    logging.info("run complete; %d artifacts", len(manifest["artifacts"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quint",
        description="Qualitative interval patterns and rare-interaction discovery",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic cohort pair")
    p_synth.add_argument("--n-pos", type=int, default=200)
    p_synth.add_argument("--n-neg", type=int, default=200)
    p_synth.add_argument("--n-planted", type=int, default=5)
    p_synth.add_argument("--n-common", type=int, default=20)
    p_synth.add_argument("--no-verify", action="store_true",
                         help="skip the round-trip self-check")
    _add_common(p_synth)
    p_synth.set_defaults(func=_cmd_synth)

    p_abs = sub.add_parser("abstract", help="raw CSV to pattern templates")
    p_abs.add_argument("--input", required=True)
    p_abs.add_argument("--output", default="templates.jsonl")
    p_abs.add_argument("--split-gap", dest="split_gap", type=float, default=None)
    p_abs.add_argument("--max-timestamp", dest="max_timestamp", type=float,
                       default=None)
    _add_common(p_abs)
    p_abs.set_defaults(func=_cmd_abstract)

    p_graph = sub.add_parser("build-graphs", help="templates to interaction graphs")
    p_graph.add_argument("--templates", required=True)
    p_graph.add_argument("--output", default="graphs.jsonl")
    p_graph.add_argument("--max-gap", dest="max_gap", type=float, default=None)
    _add_common(p_graph)
    p_graph.set_defaults(func=_cmd_build_graphs)

    p_disc = sub.add_parser("discover", help="fit the prior and rank interactions")
    p_disc.add_argument("--graphs", required=True)
    p_disc.add_argument("--k-max", dest="k_max", type=int, default=None)
    p_disc.add_argument("--lexicon-cap", dest="lexicon_cap", type=int, default=None)
    p_disc.add_argument("--min-support", dest="min_support", type=float, default=None)
    p_disc.add_argument("--lambda-init", dest="lambda_init", default=None)
    p_disc.add_argument("--tol", type=float, default=None)
    p_disc.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_disc.add_argument("--lambda-cap", dest="lambda_cap", type=float, default=None)
    p_disc.add_argument("--knn-k", dest="knn_k", type=int, default=None)
    p_disc.add_argument("--max-clusters", dest="max_clusters", type=int, default=None)
    p_disc.add_argument("--sym-similarity", dest="sym_similarity",
                        action="store_true")
    p_disc.add_argument("--dump-similarity", dest="dump_similarity",
                        action="store_true")
    _add_common(p_disc)
    p_disc.set_defaults(func=_cmd_discover)

    p_prev = sub.add_parser("prevalence", help="per-cohort pattern prevalence")
    p_prev.add_argument("--discovery", required=True)
    p_prev.add_argument("--pos-graphs", required=True)
    p_prev.add_argument("--neg-graphs", required=True)
    p_prev.add_argument("--rate", dest="sample_rate", type=float, default=None)
    p_prev.add_argument("--d-max", dest="d_max", type=int, default=None)
    p_prev.add_argument("--w-slack", dest="w_slack", type=int, default=None)
    _add_common(p_prev)
    p_prev.set_defaults(func=_cmd_prevalence)

    p_feat = sub.add_parser("featurize", help="export a pattern feature matrix")
    p_feat.add_argument("--discovery", required=True)
    p_feat.add_argument("--pos-graphs", required=True)
    p_feat.add_argument("--neg-graphs", default=None)
    p_feat.add_argument("--output", default="features.csv")
    p_feat.add_argument("--rate", dest="sample_rate", type=float, default=None)
    p_feat.add_argument("--d-max", dest="d_max", type=int, default=None)
    p_feat.add_argument("--w-slack", dest="w_slack", type=int, default=None)
    p_feat.add_argument("--counts", dest="count_features", action="store_true")
    _add_common(p_feat)
    p_feat.set_defaults(func=_cmd_featurize)

    p_run = sub.add_parser("run", help="full pipeline on a cohort pair")
    p_run.add_argument("--pos", required=True)
    p_run.add_argument("--neg", required=True)
    p_run.add_argument("--max-gap", dest="max_gap", type=float, default=None)
    p_run.add_argument("--split-gap", dest="split_gap", type=float, default=None)
    p_run.add_argument("--max-timestamp", dest="max_timestamp", type=float,
                       default=None)
    p_run.add_argument("--k-max", dest="k_max", type=int, default=None)
    p_run.add_argument("--lexicon-cap", dest="lexicon_cap", type=int, default=None)
    p_run.add_argument("--min-support", dest="min_support", type=float, default=None)
    p_run.add_argument("--lambda-init", dest="lambda_init", default=None)
    p_run.add_argument("--tol", type=float, default=None)
    p_run.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_run.add_argument("--lambda-cap", dest="lambda_cap", type=float, default=None)
    p_run.add_argument("--rate", dest="sample_rate", type=float, default=None)
    p_run.add_argument("--d-max", dest="d_max", type=int, default=None)
    p_run.add_argument("--w-slack", dest="w_slack", type=int, default=None)
    p_run.add_argument("--knn-k", dest="knn_k", type=int, default=None)
    p_run.add_argument("--max-clusters", dest="max_clusters", type=int, default=None)
    p_run.add_argument("--sym-similarity", dest="sym_similarity",
                       action="store_true")
    p_run.add_argument("--dump-similarity", dest="dump_similarity",
                       action="store_true")
    p_run.add_argument("--counts", dest="count_features", action="store_true")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single translation point to exit codes
        for exc_type, code in _EXIT_CODES:
            if isinstance(exc, exc_type):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
