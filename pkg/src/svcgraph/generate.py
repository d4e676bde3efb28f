"""Synthetic call-graph generation from random graph models.

Generation expands a FIFO queue of (depth, vertex, sibling set) entries.
The entry vertex is always expanded; deeper vertices are expanded only when
their label is relay or normal.  Each queue entry carries the sibling set it
was generated with (the rest of its parent's sampled children set), so a
model built from tree-shaped corpora is only ever queried at observed
contexts.  Every generation index derives its own RNG from (master seed,
index), which makes corpus generation order- and worker-count-independent.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from typing import Mapping

import numpy as np

from .graphs import (
    CallEdge,
    DependencyGraph,
    FineCallGraph,
    Vertex,
    merge_dependency_graph,
)
from .model import BackoffStats, RandomGraphModel, sample_children

EXPANDABLE_LABELS = {"relay", "normal"}

DEFAULT_MAX_DEPTH = 20


@dataclass
class GenerationStats:
    """Counters accumulated while generating a corpus."""

    truncations: int = 0
    backoffs: BackoffStats = field(default_factory=BackoffStats)
    service_counts: Counter = field(default_factory=Counter)

    def merge(self, other: "GenerationStats") -> None:
        self.truncations += other.truncations
        self.backoffs.counts.update(other.backoffs.counts)
        self.service_counts.update(other.service_counts)

    def as_dict(self) -> dict:
        return {
            "truncations": self.truncations,
            "backoffs": self.backoffs.as_dict(),
            "service_counts": {k: self.service_counts[k] for k in sorted(self.service_counts)},
        }


def generate_call_graph(
    model: RandomGraphModel,
    rng,
    max_depth: int = DEFAULT_MAX_DEPTH,
    strict: bool = False,
    stats: GenerationStats | None = None,
) -> FineCallGraph:
    """Generate one call graph (count 1) from a model.

    Vertices popped at max_depth are coerced to leaves; each coercion of a
    vertex that would have expanded bumps the truncation counter.
    """
    if max_depth < 2:
        raise ValueError(f"max_depth must be >= 2, got {max_depth}")
    labels = model.labels
    backoffs = stats.backoffs if stats is not None else None
    queue: deque = deque([(1, model.entry.vid, frozenset())])
    edges: list[CallEdge] = []
    while queue:
        depth, u, siblings = queue.popleft()
        if depth > 1 and labels.get(u, "normal") not in EXPANDABLE_LABELS:
            continue
        if depth >= max_depth:
            if stats is not None:
                stats.truncations += 1
            continue
        children = sample_children(
            model, u, siblings, depth, rng, strict=strict, stats=backoffs
        )
        if not children:
            continue
        um = Vertex(u[0], u[1], labels.get(u))
        member_ids = frozenset((m[0], m[1]) for m in children)
        for name, interface, weight, mode in sorted(children):
            vid = (name, interface)
            edges.append(
                CallEdge(
                    um_depth=depth,
                    um=um,
                    dm=Vertex(name, interface, labels.get(vid)),
                    weight=weight,
                    comm_mode=mode,
                )
            )
            queue.append((depth + 1, vid, member_ids - {vid}))
    return FineCallGraph.from_edges(
        model.service_id,
        model.entry,
        edges,
        count=1,
        entry_mode=model.entry_mode,
    )


@dataclass
class GenerationResult:
    """Aggregated output of one generation run."""

    dependency: DependencyGraph
    stats: GenerationStats

    @property
    def unique_graphs(self) -> tuple[FineCallGraph, ...]:
        return self.dependency.call_graphs


def _service_table(occurrence_counts: Mapping[str, int]) -> tuple[list[str], list[int], int]:
    services = sorted(occurrence_counts)
    cumulative, running = [], 0
    for service in services:
        count = occurrence_counts[service]
        if count < 0:
            raise ValueError(f"negative occurrence count for {service!r}")
        running += count
        cumulative.append(running)
    if running <= 0:
        raise ValueError("occurrence counts sum to zero")
    return services, cumulative, running


def _generate_range(
    models: Mapping[str, RandomGraphModel],
    occurrence_counts: Mapping[str, int],
    seed: int,
    start: int,
    stop: int,
    max_depth: int,
    strict: bool,
) -> tuple[dict[str, FineCallGraph], GenerationStats]:
    """Generate indices [start, stop); returns unique graphs and stats."""
    services, cumulative, total = _service_table(occurrence_counts)
    stats = GenerationStats()
    unique: dict[str, FineCallGraph] = {}
    for index in range(start, stop):
        rng = np.random.default_rng((seed, index))
        if len(services) == 1:
            service = services[0]
        else:
            draw = int(rng.integers(0, total))
            position = 0
            while cumulative[position] <= draw:
                position += 1
            service = services[position]
        stats.service_counts[service] += 1
        graph = generate_call_graph(
            models[service], rng, max_depth=max_depth, strict=strict, stats=stats
        )
        key = graph.canonical_key
        prior = unique.get(key)
        if prior is None:
            unique[key] = graph
        else:
            unique[key] = replace(prior, count=prior.count + 1)
    return unique, stats


def generate_corpus(
    models: Mapping[str, RandomGraphModel],
    occurrence_counts: Mapping[str, int],
    count: int,
    seed: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
    strict: bool = False,
    workers: int = 1,
    target_service_id: str | None = None,
) -> GenerationResult:
    """Generate `count` call graphs, mixing services by occurrence counts.

    The output dependency graph aggregates identical generations by canonical
    key.  Results are byte-identical for a fixed (seed, count) regardless of
    worker count, because each index seeds its own generator.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    missing = set(occurrence_counts) - set(models)
    if missing:
        raise ValueError(f"occurrence counts name services without models: {sorted(missing)}")
    args = (models, occurrence_counts, seed)
    if workers <= 1 or count < 4:
        unique, stats = _generate_range(*args, 0, count, max_depth, strict)
    else:
        workers = min(workers, count)
        bounds = [round(i * count / workers) for i in range(workers + 1)]
        jobs = [
            (*args, bounds[i], bounds[i + 1], max_depth, strict)
            for i in range(workers)
        ]
        with get_context("fork").Pool(workers) as pool:
            parts = pool.starmap(_generate_range, jobs)
        unique, stats = {}, GenerationStats()
        for part_unique, part_stats in parts:
            stats.merge(part_stats)
            for key, graph in part_unique.items():
                prior = unique.get(key)
                if prior is None:
                    unique[key] = graph
                else:
                    unique[key] = replace(prior, count=prior.count + graph.count)
    if target_service_id is None and len(set(occurrence_counts)) > 1:
        raise ValueError("a mixed-service corpus needs an explicit target_service_id")
    dependency = merge_dependency_graph(
        sorted(unique.values(), key=lambda g: (-g.count, g.canonical_key)),
        service_id=target_service_id,
    )
    return GenerationResult(dependency=dependency, stats=stats)
