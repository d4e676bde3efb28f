"""Batch command-line surface wiring the pipeline stages end to end.

Each subcommand reads the prior stage's artifacts and writes its own into
`--out`, alongside the fully-resolved config (`config.txt`).  JSON artifacts
carry a short hash of that config for provenance.  Exit codes: 0 success,
2 input error, 3 internal invariant failure; failures print one
machine-readable JSON record to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import re
import sys
from typing import Mapping, Sequence

from .characterize import (
    children_set_report,
    extract_observations,
    interface_report,
    load_timeseries,
    repeated_call_report,
    sibling_influence_report,
    summarize,
)
from .cluster import category_profiles, cluster, kernel_matrix
from .config import PipelineConfig, load_config
from .generate import generate_corpus
from .graphs import (
    DependencyGraph,
    call_graph_to_dot,
    dependency_graph_to_dict,
    dependency_graph_to_dot,
    graph_stats,
    records_from_call_graph,
)
from .ingest import parse_trace_file, write_trace_file
from .jsonio import format_float, write_artifact
from .metrics import compare_corpora, extract_distributions
from .model import (
    StrictContextError,
    UnknownVertexError,
    build_model,
    load_model_file,
    serialize_model,
)
from .pipeline import CORPUS_SCHEMA, corpus_from_dict, corpus_to_dict, ingest_records
from .scaling import models_from_dict, parse_timeline, simulate

MODEL_INDEX_SCHEMA = "model_index/v1"
CATEGORIES_SCHEMA = "categories/v1"
KERNEL_SCHEMA = "kernel/v1"
CHARACTERIZATION_SCHEMA = "characterization/v1"
COMPARISON_SCHEMA = "comparison/v1"
GENERATION_STATS_SCHEMA = "generation_stats/v1"

_INPUT_ERRORS = (ValueError, OSError, StrictContextError, UnknownVertexError)


# --- shared helpers ----------------------------------------------------------


def _read_json(path: str):
    with open(path) as handle:
        return json.load(handle)


def _slug(name: str, taken: set[str]) -> str:
    base = re.sub(r"[^A-Za-z0-9._-]", "_", name) or "service"
    slug, n = base, 1
    while slug in taken:
        n += 1
        slug = f"{base}-{n}"
    taken.add(slug)
    return slug


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return "" if value is None else str(value)


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(cell) for cell in row])


def _flatten(prefix: str, value, out: list[tuple[str, str]]) -> None:
    """Depth-first flatten of a JSON-shaped object into (metric, value) rows."""
    if isinstance(value, Mapping):
        for key in sorted(value, key=str):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], out)
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            _flatten(f"{prefix}.{index}", item, out)
    else:
        out.append((prefix, _csv_cell(value)))


def _emit_config(out_dir: str, config: PipelineConfig) -> None:
    with open(os.path.join(out_dir, "config.txt"), "w") as handle:
        handle.write(config.render())


def _load_corpus(path: str) -> dict[str, DependencyGraph]:
    return corpus_from_dict(_read_json(path))


def _one_input(args) -> str:
    if len(args.input) != 1:
        raise ValueError(f"{args.command} takes exactly one --input, got {len(args.input)}")
    return args.input[0]


def _two_inputs(args, first: str, second: str) -> tuple[str, str]:
    if len(args.input) != 2:
        raise ValueError(
            f"{args.command} takes exactly two --input values ({first}, then {second}),"
            f" got {len(args.input)}"
        )
    return args.input[0], args.input[1]


# --- subcommand handlers -----------------------------------------------------


def _cmd_ingest(args, config: PipelineConfig, out_dir: str) -> None:
    records = []
    rejected = 0
    taken: set[str] = set()
    for path in args.input:
        stem = _slug(os.path.basename(path) or "trace", taken)
        result = parse_trace_file(path)
        records.extend(result.records)
        rejected += len(result.rejects)
        if result.rejects:
            with open(os.path.join(out_dir, f"{stem}.rejects"), "w") as handle:
                handle.write("\n".join(result.rejects) + "\n")
    outcome = ingest_records(records, top_fraction=config.top_fraction)
    outcome.summary.rejected_rows = rejected
    write_artifact(
        os.path.join(out_dir, "corpus.json"),
        corpus_to_dict(outcome.services),
        config_hash=config.config_hash,
    )
    write_artifact(
        os.path.join(out_dir, "ingest_summary.json"),
        {"schema": "ingest_summary/v1", **outcome.summary.as_dict()},
        config_hash=config.config_hash,
    )
    rows = []
    for service_id in sorted(outcome.services):
        series = load_timeseries(service_id, outcome.services[service_id].arrivals)
        for cg_index in sorted(series.per_graph):
            for offset, queries in enumerate(series.per_graph[cg_index]):
                rows.append((series.start_bin + offset, service_id, cg_index, queries))
    _write_csv(
        os.path.join(out_dir, "timeseries.csv"),
        ("minute", "service_id", "cg_index", "queries"),
        rows,
    )


def _characterize_service(dep: DependencyGraph, config: PipelineConfig) -> dict:
    observations = extract_observations(dep)
    labels = dep.vertex_labels()
    influence = sibling_influence_report(
        observations, labels, epsilon=config.influence_epsilon
    )
    depths, widths, sizes = [], [], []
    for graph in dep.call_graphs:
        stats = graph_stats(graph)
        depths.extend([float(stats.depth)] * graph.count)
        widths.extend([float(stats.width)] * graph.count)
        sizes.extend([float(stats.vertex_count)] * graph.count)
    return {
        "call_graphs": len(dep.call_graphs),
        "total_queries": dep.total_queries,
        "graph_stats": {
            "depth": summarize(depths).as_dict(),
            "width": summarize(widths).as_dict(),
            "size": summarize(sizes).as_dict(),
        },
        "children_sets": children_set_report(observations).as_dict(),
        "repeated_calls": repeated_call_report(observations, labels).as_dict(),
        "influence": {
            "epsilon": influence.epsilon,
            "eligible_count": len(influence.eligible),
            "influenced_count": sum(
                1 for u in influence.eligible if influence.influenced[u]
            ),
            "influenced_fraction": influence.influenced_fraction,
            "per_depth_fractions": {
                str(depth): fraction
                for depth, fraction in influence.per_depth_fractions().items()
            },
            "service_influenced": influence.service_influenced,
            "per_vertex": {
                f"{name}::{iface}": influence.influenced[(name, iface)]
                for name, iface in sorted(influence.eligible)
            },
        },
        "interfaces": interface_report(dep.call_graphs).as_dict(),
    }


def _cmd_characterize(args, config: PipelineConfig, out_dir: str) -> None:
    corpus = _load_corpus(_one_input(args))
    services = {
        service_id: _characterize_service(corpus[service_id], config)
        for service_id in sorted(corpus)
    }
    write_artifact(
        os.path.join(out_dir, "characterization.json"),
        {"schema": CHARACTERIZATION_SCHEMA, "services": services},
        config_hash=config.config_hash,
    )
    rows = []
    for service_id, report in services.items():
        flat: list[tuple[str, str]] = []
        _flatten("", report, flat)
        rows.extend((service_id, metric, value) for metric, value in flat)
    _write_csv(
        os.path.join(out_dir, "characterization.csv"),
        ("service_id", "metric", "value"),
        rows,
    )


def _cmd_cluster(args, config: PipelineConfig, out_dir: str) -> None:
    corpus = _load_corpus(_one_input(args))
    service_ids = sorted(corpus)
    graphs = [corpus[service_id] for service_id in service_ids]
    kernel = kernel_matrix(graphs, iterations=config.kernel_iterations)
    result = cluster(
        kernel,
        k_range=range(config.k_min, config.k_max + 1),
        seed=config.seed,
        restarts=config.restarts,
    )
    assignments = dict(zip(service_ids, result.assignments))
    totals = {service_id: corpus[service_id].total_queries for service_id in service_ids}
    profiles = category_profiles(totals, assignments, silhouette=result.silhouette)
    write_artifact(
        os.path.join(out_dir, "kernel.json"),
        {
            "schema": KERNEL_SCHEMA,
            "iterations": config.kernel_iterations,
            "services": service_ids,
            "matrix": [[float(v) for v in row] for row in kernel],
        },
        config_hash=config.config_hash,
    )
    write_artifact(
        os.path.join(out_dir, "categories.json"),
        {
            "schema": CATEGORIES_SCHEMA,
            "assignments": assignments,
            "clustering": result.as_dict(),
            "profiles": [profile.as_dict() for profile in profiles],
        },
        config_hash=config.config_hash,
    )
    _write_csv(
        os.path.join(out_dir, "assignments.csv"),
        ("service_id", "category"),
        [(service_id, assignments[service_id]) for service_id in service_ids],
    )


def _cmd_model(args, config: PipelineConfig, out_dir: str) -> None:
    corpus = _load_corpus(_one_input(args))
    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    index = []
    taken: set[str] = set()
    for service_id in sorted(corpus):
        model = build_model(corpus[service_id])
        filename = f"{_slug(service_id, taken)}.json"
        write_artifact(
            os.path.join(models_dir, filename),
            serialize_model(model),
            config_hash=config.config_hash,
        )
        index.append(
            {
                "service_id": service_id,
                "path": filename,
                "total_queries": model.total_queries,
            }
        )
    write_artifact(
        os.path.join(models_dir, "index.json"),
        {"schema": MODEL_INDEX_SCHEMA, "models": index},
        config_hash=config.config_hash,
    )


def _load_model_index(artifacts_dir: str):
    index_path = os.path.join(artifacts_dir, "models", "index.json")
    data = _read_json(index_path)
    if data.get("schema") != MODEL_INDEX_SCHEMA:
        raise ValueError(f"unexpected model index schema: {data.get('schema')!r}")
    base = os.path.dirname(index_path)
    return {
        entry["service_id"]: load_model_file(os.path.join(base, entry["path"]))
        for entry in data["models"]
    }


def _occurrence_counts(artifacts_dir: str, config: PipelineConfig, models) -> dict[str, int]:
    """Within-category service mix; falls back to all models when unclustered."""
    categories_path = os.path.join(artifacts_dir, "categories.json")
    if not os.path.exists(categories_path):
        if config.category != 0:
            raise ValueError(
                f"--category {config.category} requested but {categories_path} does not exist"
            )
        return {service_id: model.total_queries for service_id, model in models.items()}
    data = _read_json(categories_path)
    if data.get("schema") != CATEGORIES_SCHEMA:
        raise ValueError(f"unexpected categories schema: {data.get('schema')!r}")
    for profile in data["profiles"]:
        if profile["category"] == config.category:
            return {service: int(count) for service, count in profile["services"].items()}
    known = sorted(entry["category"] for entry in data["profiles"])
    raise ValueError(f"no category {config.category}; clustering produced {known}")


def _cmd_generate(args, config: PipelineConfig, out_dir: str) -> None:
    artifacts_dir = _one_input(args)
    models = _load_model_index(artifacts_dir)
    occurrence = _occurrence_counts(artifacts_dir, config, models)
    missing = sorted(set(occurrence) - set(models))
    if missing:
        raise ValueError(f"category names services without model files: {missing}")
    target = None
    if len(occurrence) > 1:
        target = f"category_{config.category}"
    result = generate_corpus(
        {service_id: models[service_id] for service_id in occurrence},
        occurrence,
        count=config.count,
        seed=config.seed,
        max_depth=config.max_depth,
        strict=config.strict_contexts,
        workers=args.workers,
        target_service_id=target,
    )
    dependency = result.dependency
    write_artifact(
        os.path.join(out_dir, "generated_corpus.json"),
        {"schema": CORPUS_SCHEMA, "services": [dependency_graph_to_dict(dependency)]},
        config_hash=config.config_hash,
    )
    rows = []
    for index, graph in enumerate(dependency.call_graphs):
        stats = graph_stats(graph)
        digest = hashlib.sha256(graph.canonical_key.encode()).hexdigest()[:12]
        rows.append((index, digest, graph.count, stats.depth, stats.vertex_count))
    _write_csv(
        os.path.join(out_dir, "generated_counts.csv"),
        ("cg_index", "cg_key", "count", "depth", "size"),
        rows,
    )
    write_artifact(
        os.path.join(out_dir, "generation_stats.json"),
        {
            "schema": GENERATION_STATS_SCHEMA,
            "requested": config.count,
            "unique_graphs": len(dependency.call_graphs),
            **result.stats.as_dict(),
        },
        config_hash=config.config_hash,
    )
    if args.emit_trace:
        records = []
        generation = 0
        for graph in dependency.call_graphs:
            for _ in range(graph.count):
                records.extend(
                    records_from_call_graph(
                        graph,
                        trace_id=f"gen-{generation:07d}",
                        timestamp_ms=generation * 1000,
                    )
                )
                generation += 1
        write_trace_file(records, os.path.join(out_dir, "generated_trace.csv"))


def _pooled_distributions(path: str, config: PipelineConfig):
    corpus = _load_corpus(path)
    graphs = [
        graph
        for service_id in sorted(corpus)
        for graph in corpus[service_id].call_graphs
    ]
    return extract_distributions(
        graphs, depth_cap=config.depth_cap, size_cap=config.size_cap
    )


def _cmd_compare(args, config: PipelineConfig, out_dir: str) -> None:
    generated_path, reference_path = _two_inputs(args, "generated corpus", "reference corpus")
    generated = _pooled_distributions(generated_path, config)
    reference = _pooled_distributions(reference_path, config)
    summary = compare_corpora(generated, reference)
    write_artifact(
        os.path.join(out_dir, "comparison.json"),
        {
            "schema": COMPARISON_SCHEMA,
            "generated": generated.as_dict(),
            "reference": reference.as_dict(),
            "divergences": summary.as_dict(),
        },
        config_hash=config.config_hash,
    )
    flat: list[tuple[str, str]] = []
    _flatten("", summary.as_dict(), flat)
    _write_csv(os.path.join(out_dir, "comparison.csv"), ("metric", "jsd"), flat)


def _cmd_simulate_scaling(args, config: PipelineConfig, out_dir: str) -> None:
    timeline_path, models_path = _two_inputs(args, "timeline CSV", "demand models JSON")
    with open(timeline_path) as handle:
        timeline = parse_timeline(handle)
    models = models_from_dict(_read_json(models_path))
    report = simulate(timeline, models)
    write_artifact(
        os.path.join(out_dir, "scaling.json"),
        {"schema": "scaling/v1", **report.as_dict()},
        config_hash=config.config_hash,
    )
    _write_csv(
        os.path.join(out_dir, "scaling.csv"),
        ("strategy", "core_hours", "normalized", "violation_fraction"),
        [
            (
                strategy,
                outcome.core_hours,
                outcome.normalized_core_hours,
                outcome.violation_fraction,
            )
            for strategy, outcome in sorted(report.outcomes.items())
        ],
    )


def _cmd_render(args, config: PipelineConfig, out_dir: str) -> None:
    corpus = _load_corpus(_one_input(args))
    dot_dir = os.path.join(out_dir, "dot")
    os.makedirs(dot_dir, exist_ok=True)
    taken: set[str] = set()
    for service_id in sorted(corpus):
        dep = corpus[service_id]
        stem = _slug(service_id, taken)
        with open(os.path.join(dot_dir, f"{stem}.dot"), "w") as handle:
            handle.write(dependency_graph_to_dot(dep))
        for index, graph in enumerate(dep.call_graphs):
            with open(os.path.join(dot_dir, f"{stem}.cg{index}.dot"), "w") as handle:
                handle.write(call_graph_to_dot(graph, name=f"cg{index}"))


_HANDLERS = {
    "ingest": _cmd_ingest,
    "characterize": _cmd_characterize,
    "cluster": _cmd_cluster,
    "model": _cmd_model,
    "generate": _cmd_generate,
    "compare": _cmd_compare,
    "simulate-scaling": _cmd_simulate_scaling,
    "render": _cmd_render,
}

_HELP = {
    "ingest": "parse trace CSVs into a filtered, labeled per-service corpus",
    "characterize": "emit per-service structure reports from a corpus",
    "cluster": "kernel K-means over services; categories and occurrence profiles",
    "model": "fit one random-graph model per service",
    "generate": "sample synthetic call graphs from fitted models",
    "compare": "distribution divergences between two corpora",
    "simulate-scaling": "replay a load timeline under three scaling strategies",
    "render": "export DOT files for every dependency and call graph",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svcgraph",
        description="Trace-driven call-graph analysis, modeling, and generation.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, help_text in _HELP.items():
        sub = subparsers.add_parser(command, help=help_text)
        sub.add_argument("--config", help="key=value config file")
        sub.add_argument(
            "--input",
            action="append",
            required=True,
            help="input path; repeat for commands that take two inputs",
        )
        sub.add_argument("--out", required=True, help="output directory")
        sub.add_argument("--seed", type=int, help="override the master seed")
        sub.add_argument("--category", type=int, help="override the generation category")
        sub.add_argument("--count", type=int, help="override the generation count")
        sub.add_argument(
            "--workers", type=int, default=1, help="parallel workers (results identical)"
        )
        sub.add_argument(
            "--strict-contexts",
            action="store_true",
            help="fail generation on any unseen sampling context",
        )
        if command == "generate":
            sub.add_argument(
                "--emit-trace",
                action="store_true",
                help="also write the generated corpus as trace records",
            )
    return parser


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config)
    overrides = {
        "seed": args.seed,
        "category": args.category,
        "count": args.count,
    }
    if args.strict_contexts:
        overrides["strict_contexts"] = True
    return config.with_overrides(**overrides)


def _fail(exc: BaseException, code: int) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.workers < 1:
            raise ValueError(f"--workers must be >= 1, got {args.workers}")
        os.makedirs(args.out, exist_ok=True)
        _emit_config(args.out, config)
        _HANDLERS[args.command](args, config, args.out)
    except _INPUT_ERRORS as exc:
        return _fail(exc, 2)
    except Exception as exc:
        return _fail(exc, 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
