"""Random graph model: children-set distributions conditioned on context.

The model stores, for every observed context (vertex u, sibling set s, depth
d), the exact integer count of each children set observed there across the
corpus, weighted by call-graph query counts.  Probabilities are formed lazily
as count ratios, so they are exact rationals:

    P(u -> C | s, d) = count(u, s, d, C) / sum over C' of count(u, s, d, C')

Built models are immutable; backoff usage is tracked in a caller-owned
BackoffStats so models can be shared across parallel generators.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .characterize import ChildrenSet, children_sorted, extract_observations
from .graphs import DependencyGraph, Vertex, VertexId

MODEL_SCHEMA = "random_graph_model/v1"

Context = tuple[VertexId, frozenset[VertexId], int]


class UnknownVertexError(KeyError):
    """Queried a vertex the model has never seen (distinct from P = 0)."""


class StrictContextError(LookupError):
    """A backoff would be needed but strict-context mode is on."""


class ModelFormatError(ValueError):
    """A serialized model fails validation."""


@dataclass(frozen=True)
class OutcomeTable:
    """Children sets with integer counts, in fixed sorted order for sampling."""

    outcomes: tuple[tuple[ChildrenSet, int], ...]
    total: int
    cumulative: tuple[int, ...]

    @staticmethod
    def from_counts(counts: Mapping[ChildrenSet, int]) -> "OutcomeTable":
        ordered = tuple(
            (children, counts[children])
            for children in sorted(counts, key=children_sorted)
        )
        running, cumulative = 0, []
        for _, count in ordered:
            running += count
            cumulative.append(running)
        return OutcomeTable(
            outcomes=ordered, total=running, cumulative=tuple(cumulative)
        )

    def probability(self, children: ChildrenSet) -> Fraction:
        for outcome, count in self.outcomes:
            if outcome == children:
                return Fraction(count, self.total)
        return Fraction(0, 1)

    def sample(self, rng) -> ChildrenSet:
        """Cumulative-count inversion: identical seeds reproduce exactly."""
        draw = int(rng.integers(0, self.total))
        return self.outcomes[bisect_right(self.cumulative, draw)][0]


_EMPTY_TABLE = OutcomeTable.from_counts({frozenset(): 1})


@dataclass
class BackoffStats:
    """Counts of backoff levels used while querying or sampling a model."""

    counts: Counter = field(default_factory=Counter)

    def record(self, level: str) -> None:
        self.counts[level] += 1

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict:
        return {level: self.counts[level] for level in sorted(self.counts)}


@dataclass
class RandomGraphModel:
    """Exact-count children-set model for one service.

    Treat as immutable after construction.  `labels` maps every vertex the
    model knows to its corpus label; `contexts` holds the exact-context
    tables, with per-(u, depth) and per-u marginal tables for backoff.
    """

    service_id: str
    entry: Vertex
    entry_mode: str
    total_queries: int
    contexts: dict[Context, OutcomeTable]
    labels: dict[VertexId, str]
    depth_marginals: dict[tuple[VertexId, int], OutcomeTable]
    vertex_marginals: dict[VertexId, OutcomeTable]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RandomGraphModel):
            return NotImplemented
        return (
            self.service_id == other.service_id
            and self.entry == other.entry
            and self.entry.label == other.entry.label
            and self.entry_mode == other.entry_mode
            and self.total_queries == other.total_queries
            and self.contexts == other.contexts
            and self.labels == other.labels
        )


def _build_from_counts(
    service_id: str,
    entry: Vertex,
    entry_mode: str,
    total_queries: int,
    counts: Mapping[Context, Mapping[ChildrenSet, int]],
    labels: Mapping[VertexId, str],
) -> RandomGraphModel:
    contexts = {
        context: OutcomeTable.from_counts(outcome_counts)
        for context, outcome_counts in counts.items()
    }
    by_depth: dict[tuple[VertexId, int], Counter] = defaultdict(Counter)
    by_vertex: dict[VertexId, Counter] = defaultdict(Counter)
    for (u, _siblings, depth), table in contexts.items():
        for children, count in table.outcomes:
            by_depth[(u, depth)][children] += count
            by_vertex[u][children] += count
    return RandomGraphModel(
        service_id=service_id,
        entry=entry,
        entry_mode=entry_mode,
        total_queries=total_queries,
        contexts=contexts,
        labels=dict(labels),
        depth_marginals={
            key: OutcomeTable.from_counts(counts_) for key, counts_ in by_depth.items()
        },
        vertex_marginals={
            key: OutcomeTable.from_counts(counts_) for key, counts_ in by_vertex.items()
        },
    )


def build_model(graph: DependencyGraph) -> RandomGraphModel:
    """Count children sets per context over a service's dependency graph."""
    entries = {member.entry.vid for member in graph.call_graphs}
    if len(entries) != 1:
        raise ValueError(
            f"service {graph.service_id!r} has multiple entry vertices: {sorted(entries)}"
        )
    labels = graph.vertex_labels()
    counts: dict[Context, Counter] = defaultdict(Counter)
    for obs in extract_observations(graph):
        counts[(obs.u, obs.siblings, obs.depth)][obs.children] += obs.weight
    entry = graph.call_graphs[0].entry
    return _build_from_counts(
        service_id=graph.service_id,
        entry=entry,
        entry_mode=graph.entry_mode,
        total_queries=graph.total_queries,
        counts=counts,
        labels=labels,
    )


def _lookup(
    model: RandomGraphModel,
    u: VertexId,
    siblings: frozenset[VertexId],
    depth: int,
    strict: bool,
    stats: BackoffStats | None,
) -> OutcomeTable:
    """Resolve the outcome table for a context, backing off when unseen."""
    if u not in model.labels:
        raise UnknownVertexError(f"vertex {u!r} is unknown to the model")
    table = model.contexts.get((u, siblings, depth))
    if table is not None:
        return table
    if strict:
        raise StrictContextError(
            f"context (u={u!r}, siblings={sorted(siblings)!r}, depth={depth}) unseen"
        )
    table = model.depth_marginals.get((u, depth))
    if table is not None:
        if stats is not None:
            stats.record("sibling_backoff")
        return table
    table = model.vertex_marginals.get(u)
    if table is not None:
        if stats is not None:
            stats.record("depth_backoff")
        return table
    if stats is not None:
        stats.record("empty_set_backoff")
    return _EMPTY_TABLE


def probability(
    model: RandomGraphModel,
    u: VertexId,
    siblings: frozenset[VertexId],
    depth: int,
    children: ChildrenSet,
    stats: BackoffStats | None = None,
) -> Fraction:
    """Exact P(u -> children | siblings, depth); 0 for unseen children sets."""
    table = _lookup(model, u, frozenset(siblings), depth, strict=False, stats=stats)
    return table.probability(frozenset(children))


def sample_children(
    model: RandomGraphModel,
    u: VertexId,
    siblings: frozenset[VertexId],
    depth: int,
    rng,
    strict: bool = False,
    stats: BackoffStats | None = None,
) -> ChildrenSet:
    """Draw a children set for a context; strict mode forbids backoff."""
    table = _lookup(model, u, frozenset(siblings), depth, strict=strict, stats=stats)
    return table.sample(rng)


# --- serialization ----------------------------------------------------------


def _member_to_list(member: tuple[str, str, int, str], labels: Mapping) -> list:
    name, interface, weight, mode = member
    return [name, interface, weight, mode, labels.get((name, interface), "normal")]


def serialize_model(model: RandomGraphModel) -> dict:
    """Stable dict form of a model; loading it back round-trips exactly."""
    context_rows = []
    ordered = sorted(
        model.contexts.items(), key=lambda item: (item[0][0], item[0][2], sorted(item[0][1]))
    )
    for (u, siblings, depth), table in ordered:
        context_rows.append(
            {
                "u": list(u),
                "depth": depth,
                "siblings": [list(vid) for vid in sorted(siblings)],
                "outcomes": [
                    {
                        "children": [
                            _member_to_list(m, model.labels)
                            for m in children_sorted(children)
                        ],
                        "count": count,
                    }
                    for children, count in table.outcomes
                ],
            }
        )
    return {
        "schema": MODEL_SCHEMA,
        "service_id": model.service_id,
        "entry": {
            "ms_name": model.entry.ms_name,
            "interface": model.entry.interface,
            "label": model.entry.label or model.labels.get(model.entry.vid, "normal"),
        },
        "entry_mode": model.entry_mode,
        "total_queries": model.total_queries,
        "contexts": context_rows,
    }


def load_model(data: Mapping) -> RandomGraphModel:
    """Parse and validate a serialized model; raises ModelFormatError."""
    if data.get("schema") != MODEL_SCHEMA:
        raise ModelFormatError(
            f"unsupported model schema: {data.get('schema')!r} (want {MODEL_SCHEMA!r})"
        )
    try:
        entry = Vertex(
            data["entry"]["ms_name"], data["entry"]["interface"], data["entry"]["label"]
        )
        total_queries = int(data["total_queries"])
        service_id = data["service_id"]
        entry_mode = data.get("entry_mode", "http")
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"missing or malformed top-level field: {exc}") from exc
    labels: dict[VertexId, str] = {entry.vid: entry.label or "normal"}
    counts: dict[Context, dict[ChildrenSet, int]] = {}
    bare_vids: set[VertexId] = set()
    for c_index, row in enumerate(data.get("contexts", [])):
        where = f"contexts[{c_index}]"
        try:
            u = tuple(row["u"])
            depth = int(row["depth"])
            siblings = frozenset(tuple(vid) for vid in row["siblings"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{where}: malformed context key: {exc}") from exc
        if len(u) != 2 or any(len(vid) != 2 for vid in siblings):
            raise ModelFormatError(f"{where}: vertex ids must be [ms_name, interface]")
        if depth < 1:
            raise ModelFormatError(f"{where}: depth must be >= 1, got {depth}")
        outcome_counts: dict[ChildrenSet, int] = {}
        for o_index, outcome in enumerate(row.get("outcomes", [])):
            o_where = f"{where}.outcomes[{o_index}]"
            count = outcome.get("count")
            if not isinstance(count, int) or count <= 0:
                raise ModelFormatError(f"{o_where}: count must be a positive integer")
            members = []
            for m_index, member in enumerate(outcome.get("children", [])):
                if len(member) != 5:
                    raise ModelFormatError(
                        f"{o_where}.children[{m_index}]: want [name, interface, weight, mode, label]"
                    )
                name, interface, weight, mode, label = member
                if not isinstance(weight, int) or weight < 1:
                    raise ModelFormatError(
                        f"{o_where}.children[{m_index}]: weight must be a positive integer"
                    )
                vid = (name, interface)
                if labels.setdefault(vid, label) != label:
                    raise ModelFormatError(
                        f"{o_where}.children[{m_index}]: conflicting labels for {vid!r}"
                    )
                members.append((name, interface, weight, mode))
            children = frozenset(members)
            if len(children) != len(members):
                raise ModelFormatError(f"{o_where}: duplicate children members")
            if children in outcome_counts:
                raise ModelFormatError(f"{o_where}: duplicate children set in context")
            outcome_counts[children] = count
        context: Context = (u, siblings, depth)  # type: ignore[assignment]
        if context in counts:
            raise ModelFormatError(f"{where}: duplicate context")
        if not outcome_counts:
            raise ModelFormatError(f"{where}: context has no outcomes")
        counts[context] = outcome_counts
        bare_vids.add(u)  # type: ignore[arg-type]
        bare_vids.update(siblings)
    # Context keys carry no label, so default them only after every member
    # occurrence (which does carry one) has had the chance to claim the vid.
    for vid in bare_vids:
        labels.setdefault(vid, "normal")
    model = _build_from_counts(
        service_id=service_id,
        entry=entry,
        entry_mode=entry_mode,
        total_queries=total_queries,
        counts=counts,
        labels=labels,
    )
    entry_table = model.contexts.get((entry.vid, frozenset(), 1))
    if entry_table is not None and entry_table.total != total_queries:
        raise ModelFormatError(
            f"total_queries={total_queries} but entry context counts sum to {entry_table.total}"
        )
    return model


def save_model_file(model: RandomGraphModel, path: str) -> None:
    from .jsonio import dumps_stable

    with open(path, "w") as handle:
        handle.write(dumps_stable(serialize_model(model)))


def load_model_file(path: str) -> RandomGraphModel:
    with open(path) as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: invalid JSON: {exc}") from exc
    return load_model(data)
