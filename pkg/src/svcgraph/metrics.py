"""Distribution families over call-graph corpora and their JS divergence.

A DistributionReport captures five families, all weighted by call-graph query
counts: the depth pmf (support truncated, default 6, then renormalized), the
normalized expected-width-by-depth vector, the size pmf (support truncated,
default 14), and per-depth label and comm-mode pmfs.  Two reports compare via
base-2 Jensen-Shannon divergence per family, which is always within [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

from .graphs import FineCallGraph, graph_stats

DEFAULT_DEPTH_CAP = 6
DEFAULT_SIZE_CAP = 14

_NORMALIZATION_TOL = 1e-9


def _as_pmf(dist: Mapping | Sequence[float]) -> dict:
    if isinstance(dist, Mapping):
        return dict(dist)
    return {index: value for index, value in enumerate(dist)}


def js_divergence(p: Mapping | Sequence[float], q: Mapping | Sequence[float]) -> float:
    """Base-2 Jensen-Shannon divergence between two pmfs over a shared space.

    Inputs may be mappings or dense vectors; each must be nonnegative and sum
    to 1 within 1e-9.  Zero-probability terms contribute zero.
    """
    pmf_p, pmf_q = _as_pmf(p), _as_pmf(q)
    for name, pmf in (("p", pmf_p), ("q", pmf_q)):
        if any(value < 0 for value in pmf.values()):
            raise ValueError(f"{name} has negative probabilities")
        total = sum(pmf.values())
        if abs(total - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"{name} sums to {total!r}, not 1")
    divergence = 0.0
    for key in set(pmf_p) | set(pmf_q):
        a, b = pmf_p.get(key, 0.0), pmf_q.get(key, 0.0)
        m = (a + b) / 2
        if a > 0:
            divergence += 0.5 * a * math.log2(a / m)
        if b > 0:
            divergence += 0.5 * b * math.log2(b / m)
    return min(max(divergence, 0.0), 1.0)


def _truncate_renormalize(histogram: Mapping[int, float], cap: int) -> dict[int, float]:
    kept = {key: value for key, value in histogram.items() if 1 <= key <= cap}
    total = sum(kept.values())
    if total <= 0:
        raise ValueError(f"no probability mass within support 1..{cap}")
    return {key: kept[key] / total for key in sorted(kept)}


@dataclass
class DistributionReport:
    """The five distribution families of one corpus."""

    depth_cap: int
    size_cap: int
    depth_pmf: dict[int, float]
    width_vector: dict[int, float]
    size_pmf: dict[int, float]
    label_pmfs: dict[int, dict[str, float]]
    mode_pmfs: dict[int, dict[str, float]]
    label_mass: dict[int, float]
    mode_mass: dict[int, float]

    def as_dict(self) -> dict:
        return {
            "depth_cap": self.depth_cap,
            "size_cap": self.size_cap,
            "depth_pmf": {str(k): v for k, v in sorted(self.depth_pmf.items())},
            "width_vector": {str(k): v for k, v in sorted(self.width_vector.items())},
            "size_pmf": {str(k): v for k, v in sorted(self.size_pmf.items())},
            "label_pmfs": {
                str(depth): dict(sorted(pmf.items()))
                for depth, pmf in sorted(self.label_pmfs.items())
            },
            "mode_pmfs": {
                str(depth): dict(sorted(pmf.items()))
                for depth, pmf in sorted(self.mode_pmfs.items())
            },
            "label_mass": {str(k): v for k, v in sorted(self.label_mass.items())},
            "mode_mass": {str(k): v for k, v in sorted(self.mode_mass.items())},
        }

    @staticmethod
    def from_dict(data: Mapping) -> "DistributionReport":
        def intkeys(mapping: Mapping) -> dict:
            return {int(k): v for k, v in mapping.items()}

        return DistributionReport(
            depth_cap=data["depth_cap"],
            size_cap=data["size_cap"],
            depth_pmf=intkeys(data["depth_pmf"]),
            width_vector=intkeys(data["width_vector"]),
            size_pmf=intkeys(data["size_pmf"]),
            label_pmfs={int(k): dict(v) for k, v in data["label_pmfs"].items()},
            mode_pmfs={int(k): dict(v) for k, v in data["mode_pmfs"].items()},
            label_mass=intkeys(data["label_mass"]),
            mode_mass=intkeys(data["mode_mass"]),
        )


def extract_distributions(
    graphs: Sequence[FineCallGraph],
    depth_cap: int = DEFAULT_DEPTH_CAP,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> DistributionReport:
    """Compute the five families over a corpus, weighted by query counts.

    Graph-level families (depth, size) truncate their support and
    renormalize.  Per-depth families keep levels 1..depth_cap; deeper levels
    of deep graphs are dropped, not the graphs themselves.
    """
    if not graphs:
        raise ValueError("cannot extract distributions from an empty corpus")
    depth_hist: Counter = Counter()
    size_hist: Counter = Counter()
    width_sums: Counter = Counter()
    label_counts: dict[int, Counter] = defaultdict(Counter)
    mode_counts: dict[int, Counter] = defaultdict(Counter)
    total_weight = 0
    for graph in graphs:
        weight = graph.count
        total_weight += weight
        stats = graph_stats(graph)
        depth_hist[stats.depth] += weight
        size_hist[stats.vertex_count] += weight
        labels = {vertex.vid: vertex.label or "normal" for vertex in graph.vertices}
        for depth, vids in graph.level_sets.items():
            if depth > depth_cap:
                continue
            width_sums[depth] += weight * len(vids)
            for vid in vids:
                label_counts[depth][labels[vid]] += weight
        for edge in graph.edges:
            dm_depth = edge.um_depth + 1
            if dm_depth > depth_cap:
                continue
            mode_counts[dm_depth][edge.comm_mode] += weight * edge.weight
    width_total = sum(width_sums.values())
    label_total = sum(sum(c.values()) for c in label_counts.values())
    mode_total = sum(sum(c.values()) for c in mode_counts.values())
    return DistributionReport(
        depth_cap=depth_cap,
        size_cap=size_cap,
        depth_pmf=_truncate_renormalize(depth_hist, depth_cap),
        width_vector={
            depth: width_sums[depth] / width_total for depth in sorted(width_sums)
        },
        size_pmf=_truncate_renormalize(size_hist, size_cap),
        label_pmfs={
            depth: {
                label: count / sum(counts.values())
                for label, count in sorted(counts.items())
            }
            for depth, counts in sorted(label_counts.items())
        },
        mode_pmfs={
            depth: {
                mode: count / sum(counts.values())
                for mode, count in sorted(counts.items())
            }
            for depth, counts in sorted(mode_counts.items())
        },
        label_mass={
            depth: sum(counts.values()) / label_total
            for depth, counts in sorted(label_counts.items())
        },
        mode_mass={
            depth: sum(counts.values()) / mode_total
            for depth, counts in sorted(mode_counts.items())
        }
        if mode_total
        else {},
    )


@dataclass
class ComparisonSummary:
    """Per-family JS divergences between a generated and a real corpus."""

    depth: float
    width: float
    size: float
    labels: float
    comm_modes: float
    labels_per_depth: dict[int, float]
    comm_modes_per_depth: dict[int, float]

    def as_dict(self) -> dict:
        return {
            "depth": self.depth,
            "width": self.width,
            "size": self.size,
            "labels": self.labels,
            "comm_modes": self.comm_modes,
            "labels_per_depth": {str(k): v for k, v in sorted(self.labels_per_depth.items())},
            "comm_modes_per_depth": {
                str(k): v for k, v in sorted(self.comm_modes_per_depth.items())
            },
        }


def _per_depth_divergences(
    pmfs_a: Mapping[int, Mapping[str, float]],
    pmfs_b: Mapping[int, Mapping[str, float]],
) -> dict[int, float]:
    out: dict[int, float] = {}
    for depth in sorted(set(pmfs_a) | set(pmfs_b)):
        if depth in pmfs_a and depth in pmfs_b:
            out[depth] = js_divergence(pmfs_a[depth], pmfs_b[depth])
        else:
            out[depth] = 1.0  # occupied in one corpus only: maximal divergence
    return out


def _mass_weighted(
    per_depth: Mapping[int, float],
    mass_a: Mapping[int, float],
    mass_b: Mapping[int, float],
) -> float:
    weights = {
        depth: (mass_a.get(depth, 0.0) + mass_b.get(depth, 0.0)) / 2
        for depth in per_depth
    }
    total = sum(weights.values())
    if total <= 0:
        return 0.0
    return sum(per_depth[d] * weights[d] for d in per_depth) / total


def compare_corpora(
    generated: DistributionReport, real: DistributionReport
) -> ComparisonSummary:
    """JS divergence per family; per-depth families use mass-weighted means."""
    if (generated.depth_cap, generated.size_cap) != (real.depth_cap, real.size_cap):
        raise ValueError(
            "reports use different truncation settings: "
            f"({generated.depth_cap}, {generated.size_cap}) vs ({real.depth_cap}, {real.size_cap})"
        )
    label_per_depth = _per_depth_divergences(generated.label_pmfs, real.label_pmfs)
    mode_per_depth = _per_depth_divergences(generated.mode_pmfs, real.mode_pmfs)
    return ComparisonSummary(
        depth=js_divergence(generated.depth_pmf, real.depth_pmf),
        width=js_divergence(generated.width_vector, real.width_vector),
        size=js_divergence(generated.size_pmf, real.size_pmf),
        labels=_mass_weighted(label_per_depth, generated.label_mass, real.label_mass),
        comm_modes=_mass_weighted(mode_per_depth, generated.mode_mass, real.mode_mass),
        labels_per_depth=label_per_depth,
        comm_modes_per_depth=mode_per_depth,
    )
