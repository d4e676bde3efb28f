"""Corpus characterization: children sets, repeated calls, sibling influence.

All analyses run over ChildrenSetObservations extracted from a dependency
graph: one observation per (call graph, vertex position at a given depth),
carrying the position's sibling set, its (possibly empty) children set, and
the call graph's query count as weight.
"""

from __future__ import annotations

import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .graphs import DependencyGraph, FineCallGraph, VertexId

# One member of a children set: (ms_name, interface, weight, comm_mode).
ChildMember = tuple[str, str, int, str]
ChildrenSet = frozenset[ChildMember]

STATELESS_LABELS = {"relay", "leaf", "normal"}


def member_vid(member: ChildMember) -> VertexId:
    return (member[0], member[1])


def children_sorted(children: ChildrenSet) -> tuple[ChildMember, ...]:
    return tuple(sorted(children))


@dataclass(frozen=True)
class ChildrenSetObservation:
    """One vertex position in one call graph."""

    u: VertexId
    depth: int
    siblings: frozenset[VertexId]
    children: ChildrenSet
    cg_index: int
    weight: int


def _observations_for_graph(
    graph: FineCallGraph, cg_index: int
) -> list[ChildrenSetObservation]:
    children_of: dict[tuple[VertexId, int], set[ChildMember]] = defaultdict(set)
    parents_of: dict[tuple[VertexId, int], set[tuple[VertexId, int]]] = defaultdict(set)
    for edge in graph.edges:
        parent = (edge.um.vid, edge.um_depth)
        child = (edge.dm.vid, edge.um_depth + 1)
        children_of[parent].add(
            (edge.dm.ms_name, edge.dm.interface, edge.weight, edge.comm_mode)
        )
        parents_of[child].add(parent)
    out: list[ChildrenSetObservation] = []
    for depth, vids in sorted(graph.level_sets.items()):
        for vid in sorted(vids):
            position = (vid, depth)
            siblings: set[VertexId] = set()
            for parent in parents_of.get(position, ()):
                siblings.update(member_vid(m) for m in children_of.get(parent, ()))
            siblings.discard(vid)
            out.append(
                ChildrenSetObservation(
                    u=vid,
                    depth=depth,
                    siblings=frozenset(siblings),
                    children=frozenset(children_of.get(position, ())),
                    cg_index=cg_index,
                    weight=graph.count,
                )
            )
    return out


def extract_observations(graph: DependencyGraph) -> list[ChildrenSetObservation]:
    """One observation per (member call graph, vertex position)."""
    out: list[ChildrenSetObservation] = []
    for index, member in enumerate(graph.call_graphs):
        out.extend(_observations_for_graph(member, index))
    return out


@dataclass(frozen=True)
class StatSummary:
    """Five-number style summary; p99 is the nearest-rank percentile."""

    n: int
    minimum: float
    median: float
    mean: float
    p99: float
    maximum: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "min": self.minimum,
            "median": self.median,
            "mean": self.mean,
            "p99": self.p99,
            "max": self.maximum,
        }


def summarize(values: Sequence[float]) -> StatSummary:
    if not values:
        raise ValueError("cannot summarize an empty value list")
    ordered = sorted(values)
    n = len(ordered)
    rank = max(1, -(-99 * n // 100))  # nearest-rank p99: ceil(0.99 * n)
    return StatSummary(
        n=n,
        minimum=ordered[0],
        median=statistics.median(ordered),
        mean=sum(ordered) / n,
        p99=ordered[rank - 1],
        maximum=ordered[-1],
    )


# --- time series ------------------------------------------------------------

BIN_MS = 60_000


@dataclass
class TimeSeries:
    """Per-minute query counts for one service, total and per call graph.

    Bins are contiguous from the first to the last observed minute; minutes
    with no traffic report zero for every call graph.
    """

    service_id: str
    start_bin: int
    totals: list[int]
    per_graph: dict[int, list[int]]

    def check(self) -> None:
        for t, total in enumerate(self.totals):
            if total != sum(series[t] for series in self.per_graph.values()):
                raise AssertionError(f"bin {t}: total != sum of per-graph counts")


def load_timeseries(
    service_id: str, arrivals: Iterable[tuple[int, int]]
) -> TimeSeries:
    """Bin (timestamp_ms, cg_index) arrivals into per-minute counts."""
    rows = list(arrivals)
    if not rows:
        return TimeSeries(service_id=service_id, start_bin=0, totals=[], per_graph={})
    bins = [ts // BIN_MS for ts, _ in rows]
    start, end = min(bins), max(bins)
    length = end - start + 1
    indices = sorted({index for _, index in rows})
    per_graph = {index: [0] * length for index in indices}
    totals = [0] * length
    for (ts, index), bin_no in zip(rows, bins):
        slot = bin_no - start
        per_graph[index][slot] += 1
        totals[slot] += 1
    return TimeSeries(
        service_id=service_id, start_bin=start, totals=totals, per_graph=per_graph
    )


# --- children sets ----------------------------------------------------------


@dataclass
class ChildrenSetReport:
    """Size distribution of nonempty children sets plus name overlap rate."""

    size_histogram: dict[int, int]
    overlap_rate: float
    overlapping_names: int
    total_names: int

    def as_dict(self) -> dict:
        return {
            "size_histogram": {str(k): v for k, v in sorted(self.size_histogram.items())},
            "overlap_rate": self.overlap_rate,
            "overlapping_names": self.overlapping_names,
            "total_names": self.total_names,
        }


def children_set_report(
    observations: Iterable[ChildrenSetObservation],
) -> ChildrenSetReport:
    """Sizes count distinct ms_names per set, one tally per observation.

    A name overlaps when it appears in at least two distinct children-set
    values across the corpus.
    """
    sizes: Counter = Counter()
    sets_containing: dict[str, set[ChildrenSet]] = defaultdict(set)
    for obs in observations:
        if not obs.children:
            continue
        sizes[len({m[0] for m in obs.children})] += 1
        for member in obs.children:
            sets_containing[member[0]].add(obs.children)
    total = len(sets_containing)
    overlapping = sum(1 for sets in sets_containing.values() if len(sets) >= 2)
    return ChildrenSetReport(
        size_histogram=dict(sizes),
        overlap_rate=overlapping / total if total else 0.0,
        overlapping_names=overlapping,
        total_names=total,
    )


# --- repeated calls ---------------------------------------------------------


@dataclass
class RepeatedCallReport:
    """Edge-weight summaries over weights >= 2, split by callee label class."""

    overall: StatSummary | None
    by_class: dict[str, StatSummary | None]
    repeated_fraction: float

    def as_dict(self) -> dict:
        return {
            "overall": self.overall.as_dict() if self.overall else None,
            "by_class": {
                name: summary.as_dict() if summary else None
                for name, summary in self.by_class.items()
            },
            "repeated_fraction": self.repeated_fraction,
        }


def repeated_call_report(
    observations: Iterable[ChildrenSetObservation],
    labels: Mapping[VertexId, str],
) -> RepeatedCallReport:
    """Summaries are per unique call-graph edge, not weighted by query count."""
    all_weights: list[int] = []
    repeated_by_class: dict[str, list[int]] = {"database": [], "memcached": [], "other": []}
    for obs in observations:
        for member in obs.children:
            weight = member[2]
            all_weights.append(weight)
            if weight >= 2:
                label = labels.get(member_vid(member), "normal")
                group = label if label in ("database", "memcached") else "other"
                repeated_by_class[group].append(weight)
    repeated = [w for w in all_weights if w >= 2]
    return RepeatedCallReport(
        overall=summarize(repeated) if repeated else None,
        by_class={
            name: summarize(values) if values else None
            for name, values in repeated_by_class.items()
        },
        repeated_fraction=len(repeated) / len(all_weights) if all_weights else 0.0,
    )


# --- sibling influence ------------------------------------------------------


@dataclass(frozen=True)
class InfluenceDelta:
    """One (u, sibling set, children set) conditional-vs-marginal gap."""

    u: VertexId
    siblings: tuple[VertexId, ...]
    children: tuple[ChildMember, ...]
    conditional: Fraction
    marginal: Fraction

    @property
    def delta(self) -> Fraction:
        return abs(self.conditional - self.marginal)


@dataclass
class InfluenceReport:
    """Which stateless microservices change behavior with their siblings."""

    epsilon: float
    influenced: dict[VertexId, bool]
    eligible: set[VertexId]
    deltas: list[InfluenceDelta]
    per_depth: dict[int, tuple[int, int]]  # depth -> (influenced, eligible)
    service_influenced: bool

    @property
    def influenced_fraction(self) -> float:
        if not self.eligible:
            return 0.0
        return sum(1 for u in self.eligible if self.influenced[u]) / len(self.eligible)

    def per_depth_fractions(self) -> dict[int, float]:
        return {
            depth: (hit / total if total else 0.0)
            for depth, (hit, total) in sorted(self.per_depth.items())
        }


def _influence_deltas(
    group: list[ChildrenSetObservation],
) -> list[InfluenceDelta]:
    """Deltas for one vertex over one observation pool (all depths pooled)."""
    total = sum(obs.weight for obs in group)
    marginal: Counter = Counter()
    by_siblings: dict[frozenset[VertexId], Counter] = defaultdict(Counter)
    sibling_totals: Counter = Counter()
    for obs in group:
        marginal[obs.children] += obs.weight
        by_siblings[obs.siblings][obs.children] += obs.weight
        sibling_totals[obs.siblings] += obs.weight
    if len(by_siblings) < 2:
        return []
    u = group[0].u
    deltas = []
    outcomes = sorted(marginal, key=children_sorted)
    for siblings in sorted(by_siblings, key=sorted):
        for children in outcomes:
            deltas.append(
                InfluenceDelta(
                    u=u,
                    siblings=tuple(sorted(siblings)),
                    children=children_sorted(children),
                    conditional=Fraction(
                        by_siblings[siblings][children], sibling_totals[siblings]
                    ),
                    marginal=Fraction(marginal[children], total),
                )
            )
    return deltas


def sibling_influence_report(
    observations: Iterable[ChildrenSetObservation],
    labels: Mapping[VertexId, str],
    epsilon: float = 0.05,
) -> InfluenceReport:
    """Compare P(u -> C | siblings) against P(u -> C) for stateless vertices.

    A vertex observed under a single sibling set is excluded (its conditional
    equals its marginal by construction).  Probabilities are exact rationals,
    so epsilon=0 detects any true inequality.
    """
    eps = Fraction(str(epsilon))
    by_vertex: dict[VertexId, list[ChildrenSetObservation]] = defaultdict(list)
    for obs in observations:
        if labels.get(obs.u, "normal") in STATELESS_LABELS:
            by_vertex[obs.u].append(obs)
    influenced: dict[VertexId, bool] = {}
    eligible: set[VertexId] = set()
    all_deltas: list[InfluenceDelta] = []
    for u in sorted(by_vertex):
        deltas = _influence_deltas(by_vertex[u])
        if deltas:
            eligible.add(u)
            influenced[u] = any(d.delta > eps for d in deltas)
            all_deltas.extend(deltas)
    per_depth: dict[int, tuple[int, int]] = {}
    depths = sorted({obs.depth for group in by_vertex.values() for obs in group})
    for depth in depths:
        hit = total = 0
        for u in sorted(by_vertex):
            at_depth = [obs for obs in by_vertex[u] if obs.depth == depth]
            deltas = _influence_deltas(at_depth)
            if deltas:
                total += 1
                if any(d.delta > eps for d in deltas):
                    hit += 1
        if total:
            per_depth[depth] = (hit, total)
    return InfluenceReport(
        epsilon=epsilon,
        influenced=influenced,
        eligible=eligible,
        deltas=all_deltas,
        per_depth=per_depth,
        service_influenced=any(influenced.get(u, False) for u in eligible),
    )


# --- interfaces -------------------------------------------------------------


@dataclass
class InterfaceReport:
    """Interface counts per inbound mode and per-name call patterns.

    Patterns: (a) one call graph, one interface; (b) one call graph, several
    interfaces; (c) several call graphs, all on one shared interface;
    (d) several call graphs, pairwise-disjoint interfaces; (e) mixed.
    """

    per_mode: dict[str, StatSummary | None]
    patterns: dict[str, str]
    pattern_counts: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "per_mode": {
                mode: summary.as_dict() if summary else None
                for mode, summary in sorted(self.per_mode.items())
            },
            "patterns": dict(sorted(self.patterns.items())),
            "pattern_counts": dict(sorted(self.pattern_counts.items())),
        }


def _classify_pattern(interface_sets: list[frozenset[str]]) -> str:
    if len(interface_sets) == 1:
        return "a" if len(interface_sets[0]) == 1 else "b"
    union: set[str] = set()
    for current in interface_sets:
        union.update(current)
    if len(union) == 1:
        return "c"
    disjoint = all(
        not (interface_sets[i] & interface_sets[j])
        for i in range(len(interface_sets))
        for j in range(i + 1, len(interface_sets))
    )
    return "d" if disjoint else "e"


def interface_report(graphs: Sequence[FineCallGraph]) -> InterfaceReport:
    """Per-name interface statistics over a corpus of unique call graphs.

    Entry vertices count as called through the graph's entry mode.  A name
    called through several modes contributes its interface count to each.
    """
    interfaces: dict[str, set[str]] = defaultdict(set)
    modes: dict[str, set[str]] = defaultdict(set)
    per_graph_sets: dict[str, list[frozenset[str]]] = defaultdict(list)
    for graph in graphs:
        in_graph: dict[str, set[str]] = defaultdict(set)
        in_graph[graph.entry.ms_name].add(graph.entry.interface)
        modes[graph.entry.ms_name].add(graph.entry_mode)
        for edge in graph.edges:
            in_graph[edge.dm.ms_name].add(edge.dm.interface)
            modes[edge.dm.ms_name].add(edge.comm_mode)
        for name, found in in_graph.items():
            interfaces[name].update(found)
            per_graph_sets[name].append(frozenset(found))
    counts_by_mode: dict[str, list[int]] = defaultdict(list)
    for name in interfaces:
        for mode in modes[name]:
            counts_by_mode[mode].append(len(interfaces[name]))
    patterns = {
        name: _classify_pattern(sets) for name, sets in per_graph_sets.items()
    }
    return InterfaceReport(
        per_mode={
            mode: summarize(values) if values else None
            for mode, values in counts_by_mode.items()
        },
        patterns=patterns,
        pattern_counts=dict(Counter(patterns.values())),
    )
