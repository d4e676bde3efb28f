"""Shared fixture builders for the test suite.

The 10-trace demo corpus here is hand-authored row by row and serves as the
reference oracle for every count asserted against it; nothing in it is
derived by running the code under test.
"""

from __future__ import annotations

import zlib

import numpy as np

from svcgraph.graphs import (
    CallEdge,
    DependencyGraph,
    FineCallGraph,
    Vertex,
    aggregate_call_graphs,
    assign_labels,
    merge_dependency_graph,
)
from svcgraph.ingest import TraceRecord
from svcgraph.model import RandomGraphModel, build_model
from svcgraph.pipeline import ingest_records
from svcgraph.scaling import LinearDemandModel, LoadTimeline

SERVICE = "S"

# Call-graph shapes of the demo corpus:
#   shape 1 (6 traces): A -> B.f1 (rpc), B.f1 -> D.g twice (mc)
#   shape 2 (3 traces): A -> B.f1 (rpc), A -> C.h (rpc), B.f1 -> E.k (db)
#   shape 3 (1 trace):  A -> C.h (rpc)
DEMO_SHAPES = [1] * 6 + [2] * 3 + [3]


def demo_trace_rows(trace_id: str, timestamp: int, shape: int) -> list[TraceRecord]:
    def record(rpc_id: str, um: str, dm: str, interface: str, mode: str) -> TraceRecord:
        return TraceRecord(
            timestamp_ms=timestamp,
            trace_id=trace_id,
            service_id=SERVICE,
            rpc_id=rpc_id,
            um_name=um,
            dm_name=dm,
            interface=interface,
            comm_mode=mode,
        )

    entry = record("0", "USER", "A", "NONE", "http")
    if shape == 1:
        return [
            entry,
            record("0.1", "A", "B", "f1", "rpc"),
            record("0.1.1", "B", "D", "g", "mc"),
            record("0.1.2", "B", "D", "g", "mc"),
        ]
    if shape == 2:
        return [
            entry,
            record("0.1", "A", "B", "f1", "rpc"),
            record("0.2", "A", "C", "h", "rpc"),
            record("0.1.1", "B", "E", "k", "db"),
        ]
    return [entry, record("0.1", "A", "C", "h", "rpc")]


def demo_records() -> list[TraceRecord]:
    """All 38 rows of the demo corpus; 10 traces in one minute bin."""
    records = []
    for index, shape in enumerate(DEMO_SHAPES):
        records.extend(demo_trace_rows(f"t{index:02d}", 60_000 + index * 1_000, shape))
    return records


def demo_dependency() -> DependencyGraph:
    """The demo corpus ingested without any top-fraction filtering."""
    result = ingest_records(demo_records(), top_fraction=1.0)
    return result.services[SERVICE].dependency


def demo_model() -> RandomGraphModel:
    return build_model(demo_dependency())


# Expected demo structures, written out by hand.  Vertices are (name, iface).
A, B, C, D, E = ("A", "NONE"), ("B", "f1"), ("C", "h"), ("D", "g"), ("E", "k")
DEMO_LABELS = {A: "relay", B: "relay", C: "leaf", D: "memcached", E: "database"}
DEMO_EDGES = {
    1: [("A", "B", "f1", 1, "rpc"), ("B", "D", "g", 2, "mc")],
    2: [("A", "B", "f1", 1, "rpc"), ("A", "C", "h", 1, "rpc"), ("B", "E", "k", 1, "db")],
    3: [("A", "C", "h", 1, "rpc")],
}
DEMO_COUNTS = {1: 6, 2: 3, 3: 1}


# --- random tree corpora ------------------------------------------------------

EXPANDABLE_MODES = ("http", "rpc", "mq")
STATEFUL_MODES = ("db", "mc")
_ALL_MODES = EXPANDABLE_MODES + STATEFUL_MODES


def mode_for(vid: tuple[str, str]) -> str:
    """Deterministic comm mode per microservice name.

    Labels key off the name alone, so tying the mode to the name (not the
    full vertex id) keeps random corpora free of db-vs-mc label conflicts
    and keeps expandability consistent across every position and graph.
    """
    return _ALL_MODES[zlib.crc32(vid[0].encode()) % len(_ALL_MODES)]


def random_tree_graph(
    rng: np.random.Generator,
    service_id: str = "svc",
    max_depth: int = 4,
    max_children: int = 3,
    max_weight: int = 5,
    name_pool: int = 0,
    iface_pool: int = 4,
    tree_positions: bool = True,
) -> FineCallGraph:
    """A random call graph; by default its (vertex, depth) positions form a tree.

    Storage-mode targets never call further (they are stateful sinks), so a
    model built from a tree-positioned result regenerates it exactly.  With
    name_pool = 0 every vertex gets a unique name; a positive pool allows
    repeated names across graphs.  tree_positions=False permits a vertex to
    reappear at other positions, producing diamonds and vid repeats.
    """
    counter = 0

    def fresh_name() -> str:
        nonlocal counter
        counter += 1
        if name_pool:
            return f"m{int(rng.integers(0, name_pool))}"
        return f"m{counter}"

    entry = Vertex(fresh_name(), "NONE")
    used: set[tuple[str, str]] = {entry.vid}
    edges: list[CallEdge] = []
    frontier = [(1, entry)]
    while frontier:
        depth, parent = frontier.pop()
        if depth >= max_depth:
            continue
        fanout = int(rng.integers(0, max_children + 1)) if depth > 1 else int(
            rng.integers(1, max_children + 1)
        )
        siblings: set[tuple[str, str]] = set()
        for _ in range(fanout):
            child = Vertex(fresh_name(), f"i{int(rng.integers(0, iface_pool))}")
            if child.vid in siblings or child.vid == parent.vid:
                continue
            if tree_positions and child.vid in used:
                continue
            siblings.add(child.vid)
            used.add(child.vid)
            mode = mode_for(child.vid)
            edges.append(
                CallEdge(
                    um_depth=depth,
                    um=parent,
                    dm=child,
                    weight=int(rng.integers(1, max_weight + 1)),
                    comm_mode=mode,
                )
            )
            if mode in EXPANDABLE_MODES:
                frontier.append((depth + 1, child))
    return FineCallGraph.from_edges(service_id, entry, edges, count=1)


def random_tree_service(
    rng: np.random.Generator,
    service_id: str = "svc",
    max_graphs: int = 4,
    max_depth: int = 4,
    max_children: int = 3,
    max_weight: int = 5,
    name_pool: int = 6,
    iface_pool: int = 4,
    tree_positions: bool = True,
) -> DependencyGraph:
    """A random service: several labeled tree call graphs with random counts.

    Every graph shares the service entry vertex, as real traces would.
    """
    pool = max(name_pool, 2)
    entry_name = f"e{int(rng.integers(0, pool))}"
    entry = Vertex(entry_name, "NONE")
    graphs = []
    for _ in range(int(rng.integers(1, max_graphs + 1))):
        graph = random_tree_graph(
            rng,
            service_id=service_id,
            max_depth=max_depth,
            max_children=max_children,
            max_weight=max_weight,
            name_pool=pool,
            iface_pool=iface_pool,
            tree_positions=tree_positions,
        )
        edges = [
            CallEdge(e.um_depth, entry if e.um.vid == graph.entry.vid else e.um,
                     e.dm, e.weight, e.comm_mode)
            for e in graph.edges
        ]
        count = int(rng.integers(1, 6))
        graphs.append(
            FineCallGraph.from_edges(service_id, entry, edges, count=count)
        )
    labeled = assign_labels(aggregate_call_graphs(graphs))
    return merge_dependency_graph(labeled)


# --- planted clustering corpus ------------------------------------------------


def _as_service(service_id: str, entry: Vertex, edges: list[CallEdge]) -> DependencyGraph:
    graph = FineCallGraph.from_edges(service_id, entry, edges, count=1)
    return merge_dependency_graph(assign_labels([graph]))


def _chain_service(service_id: str, branches: int, hops: int = 2) -> DependencyGraph:
    """entry -> parallel relay chains (rpc), each ending at a database."""
    entry = Vertex(f"{service_id}_front", "NONE")
    edges = []
    for branch in range(branches):
        parent = entry
        for hop in range(hops):
            child = Vertex(f"{service_id}_b{branch}_hop{hop}", "f")
            edges.append(CallEdge(hop + 1, parent, child, 1, "rpc"))
            parent = child
        store = Vertex(f"{service_id}_b{branch}_store", "q")
        edges.append(CallEdge(hops + 1, parent, store, 1, "db"))
    return _as_service(service_id, entry, edges)


def _star_service(service_id: str, leaves: int) -> DependencyGraph:
    """entry -> many http leaves plus one memcached."""
    entry = Vertex(f"{service_id}_front", "NONE")
    edges = [
        CallEdge(1, entry, Vertex(f"{service_id}_leaf{n}", "f"), 1, "http")
        for n in range(leaves)
    ]
    edges.append(CallEdge(1, entry, Vertex(f"{service_id}_cache", "q"), 1, "mc"))
    return _as_service(service_id, entry, edges)


def _storage_service(service_id: str, stores: int) -> DependencyGraph:
    """entry -> several databases and memcacheds, no onward relays."""
    entry = Vertex(f"{service_id}_front", "NONE")
    edges = []
    for n in range(stores):
        edges.append(CallEdge(1, entry, Vertex(f"{service_id}_db{n}", "q"), 2, "db"))
        edges.append(CallEdge(1, entry, Vertex(f"{service_id}_mc{n}", "q"), 1, "mc"))
    return _as_service(service_id, entry, edges)


def planted_corpus() -> tuple[list[DependencyGraph], list[int]]:
    """24 services in 3 structural families of 8; returns (graphs, planting).

    Family members repeat one motif a distinct number of times, so their
    color histograms are nearly parallel (pairwise distinct, tiny in-family
    distances) while the families use disjoint motifs.  That makes K=3 the
    silhouette optimum: identical members would hand any finer split a
    perfect score, and heterogeneous shapes would blur the family gaps.
    """
    graphs: list[DependencyGraph] = []
    planting: list[int] = []
    for n in range(8):
        graphs.append(_chain_service(f"chain{n}", branches=2 + n))
        planting.append(0)
    for n in range(8):
        graphs.append(_star_service(f"star{n}", leaves=3 + n))
        planting.append(1)
    for n in range(8):
        graphs.append(_storage_service(f"storage{n}", stores=2 + n))
        planting.append(2)
    return graphs, planting


# --- scaling fixture ----------------------------------------------------------


def heterogeneous_scaling_fixture() -> tuple[LoadTimeline, dict[tuple[str, str], LinearDemandModel]]:
    """Two call graphs whose shared microservice differs 5.2x in per-query cost.

    The load alternates between the expensive and the cheap call graph each
    minute, so coarse strategies that pool the load misallocate: taking the
    maximum overprovisions heavily, taking the minimum underprovisions.
    All intercepts are zero, which makes min <= fine <= max provable.
    """
    models = {
        ("shared", "cg_hot"): LinearDemandModel("shared", "cg_hot", slope=0.52, intercept=0.0),
        ("shared", "cg_cold"): LinearDemandModel("shared", "cg_cold", slope=0.1, intercept=0.0),
        ("frontend", "cg_hot"): LinearDemandModel("frontend", "cg_hot", slope=0.05, intercept=0.0),
        ("frontend", "cg_cold"): LinearDemandModel("frontend", "cg_cold", slope=0.05, intercept=0.0),
        ("backend", "cg_hot"): LinearDemandModel("backend", "cg_hot", slope=0.2, intercept=0.0),
    }
    minutes = 60
    hot, cold = [], []
    for t in range(minutes):
        if t % 2 == 0:
            hot.append(100.0)
            cold.append(10.0)
        else:
            hot.append(10.0)
            cold.append(100.0)
    timeline = LoadTimeline(loads={"cg_hot": hot, "cg_cold": cold}, minutes=minutes)
    return timeline, models
