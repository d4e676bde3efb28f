"""Fine-grained call graphs and per-service dependency graphs.

A fine-grained call graph keys every vertex by (ms_name, interface) and every
edge by (um_depth, um, dm, comm_mode), with an integer weight counting how
many times the downstream vertex is repeatedly called at that position.  Call
graphs with identical sorted edge multisets (and the same entry vertex) are
the same graph; per-trace duplicates aggregate into one graph with a count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .ingest import (
    ENTRY_INTERFACE,
    ENTRY_RPC_ID,
    ENTRY_UM_NAME,
    SpanTree,
    TraceRecord,
)

LABELS = ("database", "memcached", "normal", "relay", "leaf")
STATEFUL_MODES = {"db": "database", "mc": "memcached"}

VertexId = tuple[str, str]


class LabelConflictError(ValueError):
    """A microservice was reached through both db and mc modes."""


class GraphStructureError(ValueError):
    """A call graph violates a structural invariant (e.g. disconnected)."""


@dataclass(frozen=True)
class Vertex:
    """A (ms_name, interface) pair; the label is derived, not identity."""

    ms_name: str
    interface: str
    label: str | None = field(default=None, compare=False)

    @property
    def vid(self) -> VertexId:
        return (self.ms_name, self.interface)


@dataclass(frozen=True)
class CallEdge:
    """um (at um_depth) calls dm `weight` times through comm_mode."""

    um_depth: int
    um: Vertex
    dm: Vertex
    weight: int
    comm_mode: str


def _edge_key(edge: CallEdge) -> tuple:
    return (
        edge.um_depth,
        edge.um.ms_name,
        edge.um.interface,
        edge.dm.ms_name,
        edge.dm.interface,
        edge.comm_mode,
    )


@dataclass(frozen=True)
class FineCallGraph:
    """One unique call-graph shape for a service, with its query count.

    `edges` is always collapsed (no two edges share (um_depth, um, dm,
    comm_mode)) and sorted; use `from_edges` to normalize raw edge lists.
    `entry_mode` records how the entry vertex is called (it is not part of
    graph identity, like labels).
    """

    service_id: str
    entry: Vertex
    edges: tuple[CallEdge, ...]
    count: int = 1
    entry_mode: str = "http"

    @staticmethod
    def from_edges(
        service_id: str,
        entry: Vertex,
        edges: Iterable[CallEdge],
        count: int = 1,
        entry_mode: str = "http",
    ) -> "FineCallGraph":
        """Normalize: collapse duplicate edge keys (summing weights) and sort."""
        collapsed: dict[tuple, CallEdge] = {}
        for edge in edges:
            key = _edge_key(edge)
            prior = collapsed.get(key)
            if prior is None:
                collapsed[key] = edge
            else:
                collapsed[key] = replace(prior, weight=prior.weight + edge.weight)
        ordered = tuple(collapsed[key] for key in sorted(collapsed))
        return FineCallGraph(
            service_id=service_id,
            entry=entry,
            edges=ordered,
            count=count,
            entry_mode=entry_mode,
        )

    @cached_property
    def canonical_key(self) -> str:
        """Order-independent identity: entry vertex plus sorted edge multiset."""
        payload = [
            [self.entry.ms_name, self.entry.interface],
            [
                [
                    e.um_depth,
                    e.um.ms_name,
                    e.um.interface,
                    e.dm.ms_name,
                    e.dm.interface,
                    e.weight,
                    e.comm_mode,
                ]
                for e in sorted(self.edges, key=_edge_key)
            ],
        ]
        return json.dumps(payload, separators=(",", ":"))

    @cached_property
    def level_sets(self) -> dict[int, frozenset[VertexId]]:
        """Distinct vertex ids present at each depth level (entry is level 1)."""
        levels: dict[int, set[VertexId]] = {1: {self.entry.vid}}
        for edge in self.edges:
            levels.setdefault(edge.um_depth + 1, set()).add(edge.dm.vid)
        return {depth: frozenset(ids) for depth, ids in levels.items()}

    @cached_property
    def vertices(self) -> tuple[Vertex, ...]:
        """Distinct vertices, entry first, then sorted by id."""
        by_id: dict[VertexId, Vertex] = {self.entry.vid: self.entry}
        for edge in self.edges:
            by_id.setdefault(edge.um.vid, edge.um)
            by_id.setdefault(edge.dm.vid, edge.dm)
        return tuple(by_id[vid] for vid in sorted(by_id))

    def out_edges(self, vid: VertexId, depth: int) -> list[CallEdge]:
        return [
            e for e in self.edges if e.um_depth == depth and e.um.vid == vid
        ]

    def validate(self) -> None:
        """Check structural invariants; raises GraphStructureError."""
        for edge in self.edges:
            if edge.weight < 1:
                raise GraphStructureError(f"edge weight < 1: {edge}")
            if edge.um_depth < 1:
                raise GraphStructureError(f"edge depth < 1: {edge}")
        levels = self.level_sets
        for edge in self.edges:
            if edge.um.vid not in levels.get(edge.um_depth, frozenset()):
                raise GraphStructureError(
                    f"edge at depth {edge.um_depth} has unreachable um {edge.um.vid}"
                )
        if sorted(levels) != list(range(1, max(levels) + 1)):
            raise GraphStructureError("level sets are not contiguous")


@dataclass(frozen=True)
class GraphStats:
    depth: int
    width: int
    vertex_count: int


@dataclass(frozen=True)
class UnionEdge:
    """A dependency-graph edge: union over member call graphs."""

    um: Vertex
    dm: Vertex
    comm_mode: str
    max_weight: int
    members: tuple[int, ...]


@dataclass(frozen=True)
class DependencyGraph:
    """All unique call graphs of one service plus their union structure."""

    service_id: str
    entry: Vertex
    vertices: tuple[Vertex, ...]
    edges: tuple[UnionEdge, ...]
    call_graphs: tuple[FineCallGraph, ...]
    entry_mode: str = "http"

    @property
    def total_queries(self) -> int:
        return sum(graph.count for graph in self.call_graphs)

    def vertex_labels(self) -> dict[VertexId, str]:
        return {v.vid: v.label or "normal" for v in self.vertices}


def build_call_graph(tree: SpanTree) -> FineCallGraph:
    """Collapse one span tree into a fine-grained call graph (count 1).

    Sibling spans of a parent with the same (dm_name, interface, comm_mode)
    become a single edge whose weight is the repeated-call count.
    """
    root = tree.root
    entry = Vertex(root.dm_name, root.interface)
    vertex_of: dict[str, Vertex] = {ENTRY_RPC_ID: entry}
    for rpc_id, span in tree.spans.items():
        if rpc_id != ENTRY_RPC_ID:
            vertex_of[rpc_id] = Vertex(span.dm_name, span.interface)
    edges: list[CallEdge] = []
    for rpc_id, span in tree.spans.items():
        parent_vertex = vertex_of[rpc_id]
        depth = span.depth()
        for child in tree.child_records(rpc_id):
            edges.append(
                CallEdge(
                    um_depth=depth,
                    um=parent_vertex,
                    dm=vertex_of[child.rpc_id],
                    weight=1,
                    comm_mode=child.comm_mode,
                )
            )
    return FineCallGraph.from_edges(
        tree.service_id, entry, edges, count=1, entry_mode=root.comm_mode
    )


def assign_labels(graphs: Sequence[FineCallGraph]) -> list[FineCallGraph]:
    """Label every vertex across a corpus of call graphs.

    The label is a function of the microservice name and the corpus: names
    reached via db are `database`, via mc `memcached` (both at once is a
    LabelConflictError).  Remaining names are `relay` when every occurrence
    has outgoing edges, `leaf` when none does, `normal` otherwise.
    """
    stateful: dict[str, set[str]] = {}
    for graph in graphs:
        for edge in graph.edges:
            if edge.comm_mode in STATEFUL_MODES:
                stateful.setdefault(edge.dm.ms_name, set()).add(edge.comm_mode)
    for name, modes in sorted(stateful.items()):
        if len(modes) > 1:
            raise LabelConflictError(
                f"microservice {name!r} is reached via both db and mc"
            )
    graphs_present: dict[str, int] = {}
    graphs_calling: dict[str, int] = {}
    for graph in graphs:
        present = {vid[0] for ids in graph.level_sets.values() for vid in ids}
        calling = {edge.um.ms_name for edge in graph.edges}
        for name in present:
            graphs_present[name] = graphs_present.get(name, 0) + 1
        for name in calling:
            graphs_calling[name] = graphs_calling.get(name, 0) + 1
    labels: dict[str, str] = {}
    for name, present_count in graphs_present.items():
        if name in stateful:
            labels[name] = STATEFUL_MODES[next(iter(stateful[name]))]
        elif graphs_calling.get(name, 0) == present_count:
            labels[name] = "relay"
        elif graphs_calling.get(name, 0) == 0:
            labels[name] = "leaf"
        else:
            labels[name] = "normal"

    def relabel(vertex: Vertex) -> Vertex:
        return replace(vertex, label=labels[vertex.ms_name])

    out: list[FineCallGraph] = []
    for graph in graphs:
        new_edges = tuple(
            replace(e, um=relabel(e.um), dm=relabel(e.dm)) for e in graph.edges
        )
        out.append(replace(graph, entry=relabel(graph.entry), edges=new_edges))
    return out


def aggregate_call_graphs(graphs: Iterable[FineCallGraph]) -> list[FineCallGraph]:
    """Group identical call graphs, summing counts.

    Output is sorted by descending count, ties by ascending canonical key.
    """
    grouped: dict[str, FineCallGraph] = {}
    for graph in graphs:
        key = graph.canonical_key
        prior = grouped.get(key)
        if prior is None:
            grouped[key] = graph
        else:
            grouped[key] = replace(prior, count=prior.count + graph.count)
    return sorted(grouped.values(), key=lambda g: (-g.count, g.canonical_key))


def merge_dependency_graph(
    graphs: Sequence[FineCallGraph], service_id: str | None = None
) -> DependencyGraph:
    """Merge aggregated call graphs of one service into a dependency graph.

    Union edges are keyed by (um, dm, comm_mode) and annotated with the
    maximum observed weight and the member call-graph indices.  Pass
    service_id to relabel a mixed corpus (e.g. a generated category).
    """
    if not graphs:
        raise ValueError("cannot merge an empty call-graph list")
    if service_id is None:
        ids = {g.service_id for g in graphs}
        if len(ids) != 1:
            raise ValueError(f"mixed service ids without an override: {sorted(ids)}")
        service_id = next(iter(ids))
    ordered = aggregate_call_graphs(
        replace(g, service_id=service_id) for g in graphs
    )
    vertices: dict[VertexId, Vertex] = {}
    union: dict[tuple, dict] = {}
    for index, graph in enumerate(ordered):
        for vertex in graph.vertices:
            vertices.setdefault(vertex.vid, vertex)
        for edge in graph.edges:
            key = (edge.um.vid, edge.dm.vid, edge.comm_mode)
            slot = union.setdefault(
                key, {"um": edge.um, "dm": edge.dm, "max_weight": 0, "members": set()}
            )
            slot["max_weight"] = max(slot["max_weight"], edge.weight)
            slot["members"].add(index)
    union_edges = tuple(
        UnionEdge(
            um=union[key]["um"],
            dm=union[key]["dm"],
            comm_mode=key[2],
            max_weight=union[key]["max_weight"],
            members=tuple(sorted(union[key]["members"])),
        )
        for key in sorted(union)
    )
    first = ordered[0]
    return DependencyGraph(
        service_id=service_id,
        entry=first.entry,
        vertices=tuple(vertices[vid] for vid in sorted(vertices)),
        edges=union_edges,
        call_graphs=tuple(ordered),
        entry_mode=first.entry_mode,
    )


def graph_stats(graph: FineCallGraph | DependencyGraph) -> GraphStats:
    """Depth (vertices on the longest path), width, and distinct vertex count."""
    if isinstance(graph, FineCallGraph):
        levels = graph.level_sets
        return GraphStats(
            depth=max(levels),
            width=max(len(ids) for ids in levels.values()),
            vertex_count=len({vid for ids in levels.values() for vid in ids}),
        )
    merged: dict[int, set[VertexId]] = {}
    for member in graph.call_graphs:
        for depth, ids in member.level_sets.items():
            merged.setdefault(depth, set()).update(ids)
    return GraphStats(
        depth=max(merged),
        width=max(len(ids) for ids in merged.values()),
        vertex_count=len({vid for ids in merged.values() for vid in ids}),
    )


def records_from_call_graph(
    graph: FineCallGraph, trace_id: str, timestamp_ms: int = 0
) -> list[TraceRecord]:
    """Expand a call graph back into one trace worth of span records.

    Each unit of edge weight becomes one span with a fresh dotted rpc_id.
    When a vertex position has several inbound edges, its outgoing edges are
    attached to the first emitted span instance of that position, so
    rebuilding the records yields the identical edge multiset.
    """
    root = TraceRecord(
        timestamp_ms=timestamp_ms,
        trace_id=trace_id,
        service_id=graph.service_id,
        rpc_id=ENTRY_RPC_ID,
        um_name=ENTRY_UM_NAME,
        dm_name=graph.entry.ms_name,
        interface=graph.entry.interface,
        comm_mode=graph.entry_mode,
    )
    records = [root]
    # First span emitted for each (depth, vertex) position carries its out-edges.
    instance_of: dict[tuple[int, VertexId], str] = {(1, graph.entry.vid): ENTRY_RPC_ID}
    child_counter: dict[str, int] = {}
    by_position: dict[tuple[int, VertexId], list[CallEdge]] = {}
    for edge in graph.edges:
        by_position.setdefault((edge.um_depth, edge.um.vid), []).append(edge)
    max_depth = max((e.um_depth for e in graph.edges), default=0)
    for depth in range(1, max_depth + 1):
        for position in sorted(p for p in by_position if p[0] == depth):
            parent_path = instance_of.get(position)
            if parent_path is None:
                raise GraphStructureError(
                    f"vertex {position[1]} at depth {depth} has out-edges but no parent"
                )
            for edge in sorted(by_position[position], key=_edge_key):
                for _ in range(edge.weight):
                    index = child_counter.get(parent_path, 0) + 1
                    child_counter[parent_path] = index
                    path = f"{parent_path}.{index}"
                    records.append(
                        TraceRecord(
                            timestamp_ms=timestamp_ms,
                            trace_id=trace_id,
                            service_id=graph.service_id,
                            rpc_id=path,
                            um_name=edge.um.ms_name,
                            dm_name=edge.dm.ms_name,
                            interface=edge.dm.interface,
                            comm_mode=edge.comm_mode,
                        )
                    )
                    instance_of.setdefault((depth + 1, edge.dm.vid), path)
    return records


# --- serialization ---------------------------------------------------------

CALL_GRAPH_SCHEMA = "call_graph/v1"
DEPENDENCY_SCHEMA = "dependency_graph/v1"


def _vertex_to_dict(vertex: Vertex) -> dict:
    return {
        "ms_name": vertex.ms_name,
        "interface": vertex.interface,
        "label": vertex.label,
    }


def _vertex_from_dict(data: Mapping) -> Vertex:
    return Vertex(data["ms_name"], data["interface"], data.get("label"))


def call_graph_to_dict(graph: FineCallGraph) -> dict:
    return {
        "schema": CALL_GRAPH_SCHEMA,
        "service_id": graph.service_id,
        "entry": _vertex_to_dict(graph.entry),
        "entry_mode": graph.entry_mode,
        "count": graph.count,
        "canonical_key": graph.canonical_key,
        "edges": [
            {
                "um_depth": e.um_depth,
                "um": _vertex_to_dict(e.um),
                "dm": _vertex_to_dict(e.dm),
                "weight": e.weight,
                "comm_mode": e.comm_mode,
            }
            for e in graph.edges
        ],
    }


def call_graph_from_dict(data: Mapping) -> FineCallGraph:
    if data.get("schema") != CALL_GRAPH_SCHEMA:
        raise ValueError(f"unexpected call graph schema: {data.get('schema')!r}")
    return FineCallGraph.from_edges(
        service_id=data["service_id"],
        entry=_vertex_from_dict(data["entry"]),
        edges=[
            CallEdge(
                um_depth=e["um_depth"],
                um=_vertex_from_dict(e["um"]),
                dm=_vertex_from_dict(e["dm"]),
                weight=e["weight"],
                comm_mode=e["comm_mode"],
            )
            for e in data["edges"]
        ],
        count=data["count"],
        entry_mode=data.get("entry_mode", "http"),
    )


def dependency_graph_to_dict(graph: DependencyGraph) -> dict:
    return {
        "schema": DEPENDENCY_SCHEMA,
        "service_id": graph.service_id,
        "entry": _vertex_to_dict(graph.entry),
        "entry_mode": graph.entry_mode,
        "total_queries": graph.total_queries,
        "vertices": [_vertex_to_dict(v) for v in graph.vertices],
        "edges": [
            {
                "um": _vertex_to_dict(e.um),
                "dm": _vertex_to_dict(e.dm),
                "comm_mode": e.comm_mode,
                "max_weight": e.max_weight,
                "members": list(e.members),
            }
            for e in graph.edges
        ],
        "call_graphs": [call_graph_to_dict(g) for g in graph.call_graphs],
    }


def dependency_graph_from_dict(data: Mapping) -> DependencyGraph:
    if data.get("schema") != DEPENDENCY_SCHEMA:
        raise ValueError(f"unexpected dependency graph schema: {data.get('schema')!r}")
    members = [call_graph_from_dict(g) for g in data["call_graphs"]]
    return merge_dependency_graph(members, service_id=data["service_id"])


def dependency_graph_to_dot(graph: DependencyGraph) -> str:
    """Render the union structure as a Graphviz digraph."""
    shapes = {
        "database": "cylinder",
        "memcached": "box3d",
        "relay": "ellipse",
        "leaf": "egg",
        "normal": "oval",
    }
    lines = [f'digraph "{graph.service_id}" {{', "  rankdir=LR;"]
    names: dict[VertexId, str] = {}
    for i, vertex in enumerate(graph.vertices):
        names[vertex.vid] = f"v{i}"
        text = f"{vertex.ms_name}\\n{vertex.interface}"
        shape = shapes.get(vertex.label or "normal", "oval")
        lines.append(f'  v{i} [label="{text}", shape={shape}];')
    for edge in graph.edges:
        lines.append(
            f'  {names[edge.um.vid]} -> {names[edge.dm.vid]}'
            f' [label="{edge.comm_mode} x{edge.max_weight}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def call_graph_to_dot(graph: FineCallGraph, name: str = "call_graph") -> str:
    """Render one call graph with depth-annotated vertices."""
    lines = [f'digraph "{name}" {{', "  rankdir=TB;"]
    node_ids: dict[tuple[int, VertexId], str] = {}

    def node(depth: int, vertex: Vertex) -> str:
        key = (depth, vertex.vid)
        if key not in node_ids:
            node_ids[key] = f"n{len(node_ids)}"
            label = f"{vertex.ms_name}.{vertex.interface}@d{depth}"
            lines.append(f'  {node_ids[key]} [label="{label}"];')
        return node_ids[key]

    node(1, graph.entry)
    for edge in graph.edges:
        um = node(edge.um_depth, edge.um)
        dm = node(edge.um_depth + 1, edge.dm)
        lines.append(f'  {um} -> {dm} [label="{edge.comm_mode} x{edge.weight}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
