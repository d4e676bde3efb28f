"""Trace-driven call-graph characterization, modeling, and generation."""

from __future__ import annotations

from .config import ConfigError, PipelineConfig, load_config, parse_config
from .generate import GenerationResult, generate_call_graph, generate_corpus
from .graphs import (
    CallEdge,
    DependencyGraph,
    FineCallGraph,
    GraphStructureError,
    LabelConflictError,
    Vertex,
    aggregate_call_graphs,
    assign_labels,
    build_call_graph,
    merge_dependency_graph,
)
from .ingest import (
    TraceFormatError,
    TraceRecord,
    build_span_forest,
    filter_top_fraction,
    parse_trace,
    parse_trace_file,
)
from .metrics import compare_corpora, extract_distributions, js_divergence
from .model import (
    ModelFormatError,
    RandomGraphModel,
    StrictContextError,
    UnknownVertexError,
    build_model,
    load_model_file,
    probability,
    sample_children,
    save_model_file,
)
from .pipeline import IngestResult, ServiceCorpus, ingest_records

__version__ = "0.1.0"

__all__ = [
    "CallEdge",
    "ConfigError",
    "DependencyGraph",
    "FineCallGraph",
    "GenerationResult",
    "GraphStructureError",
    "IngestResult",
    "LabelConflictError",
    "ModelFormatError",
    "PipelineConfig",
    "RandomGraphModel",
    "ServiceCorpus",
    "StrictContextError",
    "TraceFormatError",
    "TraceRecord",
    "UnknownVertexError",
    "Vertex",
    "aggregate_call_graphs",
    "assign_labels",
    "build_call_graph",
    "build_model",
    "build_span_forest",
    "compare_corpora",
    "extract_distributions",
    "filter_top_fraction",
    "generate_call_graph",
    "generate_corpus",
    "ingest_records",
    "js_divergence",
    "load_config",
    "load_model_file",
    "merge_dependency_graph",
    "parse_config",
    "parse_trace",
    "parse_trace_file",
    "probability",
    "sample_children",
    "save_model_file",
    "__version__",
]
