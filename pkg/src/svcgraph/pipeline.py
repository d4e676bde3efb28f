"""End-to-end ingest: records to filtered, labeled, per-service corpora."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .graphs import (
    DependencyGraph,
    aggregate_call_graphs,
    assign_labels,
    build_call_graph,
    dependency_graph_from_dict,
    dependency_graph_to_dict,
    merge_dependency_graph,
)
from .ingest import TraceRecord, build_span_forest, filter_top_fraction

CORPUS_SCHEMA = "corpus/v1"


@dataclass
class ServiceCorpus:
    """One retained service: its dependency graph plus trace arrivals.

    `arrivals` pairs each retained trace's root timestamp with the index of
    its call graph in the dependency graph's aggregated member list.
    """

    dependency: DependencyGraph
    arrivals: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class IngestSummary:
    parsed_records: int = 0
    rejected_rows: int = 0
    dropped_traces: int = 0
    drop_reasons: dict[str, int] = field(default_factory=dict)
    traces_total: int = 0
    services_total: int = 0
    services_retained: int = 0
    call_graphs_total: int = 0
    call_graphs_retained: int = 0
    traces_retained: int = 0

    def as_dict(self) -> dict:
        return {
            "parsed_records": self.parsed_records,
            "rejected_rows": self.rejected_rows,
            "dropped_traces": self.dropped_traces,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
            "traces_total": self.traces_total,
            "services_total": self.services_total,
            "services_retained": self.services_retained,
            "call_graphs_total": self.call_graphs_total,
            "call_graphs_retained": self.call_graphs_retained,
            "traces_retained": self.traces_retained,
        }


@dataclass
class IngestResult:
    services: dict[str, ServiceCorpus]
    summary: IngestSummary


def ingest_records(
    records: Iterable[TraceRecord], top_fraction: float = 0.9
) -> IngestResult:
    """Build per-service corpora with top-fraction filtering and labels.

    Filtering runs twice: services by total trace count, then call graphs
    within each retained service by query count.  Labels are assigned over
    the retained corpus, after filtering, so the long tail cannot influence
    them.
    """
    summary = IngestSummary()
    record_list = list(records)
    summary.parsed_records = len(record_list)
    forest = build_span_forest(record_list)
    summary.dropped_traces = forest.dropped
    summary.drop_reasons = dict(forest.drop_reasons)
    summary.traces_total = len(forest.trees) + forest.dropped

    per_service: dict[str, list[tuple[str, int, object]]] = {}
    for (service_id, trace_id), tree in forest.trees.items():
        graph = build_call_graph(tree)
        per_service.setdefault(service_id, []).append(
            (trace_id, tree.root.timestamp_ms, graph)
        )
    summary.services_total = len(per_service)

    service_totals = {service: len(rows) for service, rows in per_service.items()}
    retained_services = set(filter_top_fraction(service_totals, top_fraction))
    summary.services_retained = len(retained_services)

    services: dict[str, ServiceCorpus] = {}
    for service_id in sorted(retained_services):
        rows = per_service[service_id]
        aggregated = aggregate_call_graphs(graph for _, _, graph in rows)
        summary.call_graphs_total += len(aggregated)
        counts = {graph.canonical_key: graph.count for graph in aggregated}
        retained_keys = set(filter_top_fraction(counts, top_fraction))
        summary.call_graphs_retained += len(retained_keys)
        kept = [graph for graph in aggregated if graph.canonical_key in retained_keys]
        labeled = assign_labels(kept)
        dependency = merge_dependency_graph(labeled)
        index_of = {
            graph.canonical_key: index
            for index, graph in enumerate(dependency.call_graphs)
        }
        arrivals = sorted(
            (timestamp, index_of[graph.canonical_key])
            for _, timestamp, graph in rows
            if graph.canonical_key in retained_keys
        )
        summary.traces_retained += len(arrivals)
        services[service_id] = ServiceCorpus(dependency=dependency, arrivals=arrivals)
    return IngestResult(services=services, summary=summary)


def corpus_to_dict(services: Mapping[str, ServiceCorpus]) -> dict:
    return {
        "schema": CORPUS_SCHEMA,
        "services": [
            dependency_graph_to_dict(services[service_id].dependency)
            for service_id in sorted(services)
        ],
    }


def corpus_from_dict(data: Mapping) -> dict[str, DependencyGraph]:
    if data.get("schema") != CORPUS_SCHEMA:
        raise ValueError(f"unexpected corpus schema: {data.get('schema')!r}")
    graphs = [dependency_graph_from_dict(entry) for entry in data["services"]]
    return {graph.service_id: graph for graph in graphs}
