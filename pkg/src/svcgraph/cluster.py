"""Dependency-graph clustering with an iterative label-refinement kernel.

The kernel colors every union-graph vertex by its label, then repeatedly
rehashes each color together with the sorted multiset of (edge comm_mode,
neighbor color) pairs over outgoing union edges.  The kernel value of two
graphs is the inner product of their color histograms accumulated across all
iterations, normalized so the diagonal is 1.  Clustering is kernel K-means
over the induced distance, with the cluster count chosen by mean silhouette.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graphs import DependencyGraph, VertexId

DEFAULT_ITERATIONS = 3
DEFAULT_RESTARTS = 10
DEFAULT_K_RANGE = range(2, 11)


def _color_histograms(
    graphs: Sequence[DependencyGraph], iterations: int
) -> list[Counter]:
    """Per-graph Counter over (iteration, color id); colors interned globally."""
    palette: dict = {}

    def intern(signature) -> int:
        if signature not in palette:
            palette[signature] = len(palette)
        return palette[signature]

    histograms = [Counter() for _ in graphs]
    colorings: list[dict[VertexId, int]] = []
    adjacency: list[dict[VertexId, list[tuple[str, VertexId]]]] = []
    for index, graph in enumerate(graphs):
        colors = {
            v.vid: intern(("label", v.label or "normal")) for v in graph.vertices
        }
        out: dict[VertexId, list[tuple[str, VertexId]]] = {v.vid: [] for v in graph.vertices}
        for edge in graph.edges:
            out[edge.um.vid].append((edge.comm_mode, edge.dm.vid))
        colorings.append(colors)
        adjacency.append(out)
        for color in colors.values():
            histograms[index][(0, color)] += 1
    for iteration in range(1, iterations + 1):
        for index in range(len(graphs)):
            colors, out = colorings[index], adjacency[index]
            new_colors = {}
            for vid, color in colors.items():
                neighborhood = tuple(
                    sorted((mode, colors[nbr]) for mode, nbr in out[vid])
                )
                new_colors[vid] = intern((color, neighborhood))
            colorings[index] = new_colors
            for color in new_colors.values():
                histograms[index][(iteration, color)] += 1
    return histograms


def kernel_matrix(
    graphs: Sequence[DependencyGraph], iterations: int = DEFAULT_ITERATIONS
) -> np.ndarray:
    """Normalized kernel matrix; entries in [0, 1], unit diagonal."""
    if not graphs:
        raise ValueError("cannot build a kernel over zero graphs")
    histograms = _color_histograms(graphs, iterations)
    m = len(graphs)
    raw = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            a, b = histograms[i], histograms[j]
            if len(b) < len(a):
                a, b = b, a
            raw[i, j] = raw[j, i] = float(
                sum(count * b[key] for key, count in a.items() if key in b)
            )
    scale = np.sqrt(np.outer(np.diag(raw), np.diag(raw)))
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(scale > 0, raw / scale, 0.0)
    np.fill_diagonal(normalized, 1.0)
    return normalized


def kernel_distances(kernel: np.ndarray) -> np.ndarray:
    """Pairwise distances induced by a normalized kernel."""
    diag = np.diag(kernel)
    squared = diag[:, None] + diag[None, :] - 2 * kernel
    return np.sqrt(np.clip(squared, 0.0, None))


def _kernel_kmeans_once(kernel: np.ndarray, k: int, rng) -> np.ndarray:
    """One restart of kernel K-means; returns assignments."""
    m = kernel.shape[0]
    distances = kernel_distances(kernel) ** 2
    centers = [int(rng.integers(0, m))]
    while len(centers) < k:
        closest = np.min(distances[:, centers], axis=1)
        total = float(closest.sum())
        if total <= 0:
            centers.append(int(rng.integers(0, m)))
            continue
        draw = float(rng.random()) * total
        centers.append(int(np.searchsorted(np.cumsum(closest), draw)))
    assignments = np.argmin(distances[:, centers], axis=1)
    diag = np.diag(kernel)
    for _ in range(100):
        counts = np.bincount(assignments, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # Revive an empty cluster with the point least similar to its own.
            eligible = np.flatnonzero(counts[assignments] > 1)
            if len(eligible) == 0:
                break
            own_similarity = np.array(
                [float(kernel[i, assignments == assignments[i]].mean()) for i in eligible]
            )
            assignments[eligible[int(np.argmin(own_similarity))]] = c
            counts = np.bincount(assignments, minlength=k)
        cost = np.empty((m, k))
        for c in range(k):
            members = np.flatnonzero(assignments == c)
            if len(members) == 0:
                cost[:, c] = np.inf
                continue
            cross = kernel[:, members].mean(axis=1)
            within = kernel[np.ix_(members, members)].mean()
            cost[:, c] = diag - 2 * cross + within
        new_assignments = np.argmin(cost, axis=1)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    return assignments


def _objective(kernel: np.ndarray, assignments: np.ndarray) -> float:
    """Total within-cluster squared distance to cluster means."""
    diag = np.diag(kernel)
    total = 0.0
    for c in np.unique(assignments):
        members = np.flatnonzero(assignments == c)
        block = kernel[np.ix_(members, members)]
        total += float(diag[members].sum() - block.sum() / len(members))
    return total


def silhouette_score(distances: np.ndarray, assignments: Sequence[int]) -> float:
    """Mean silhouette; singleton-cluster points score 0, as do 0/0 cases."""
    labels = np.asarray(assignments)
    if len(np.unique(labels)) < 2:
        return 0.0
    m = len(labels)
    scores = []
    for i in range(m):
        own = np.flatnonzero(labels == labels[i])
        own = own[own != i]
        if len(own) == 0:
            scores.append(0.0)
            continue
        a = float(distances[i, own].mean())
        b = min(
            float(distances[i, np.flatnonzero(labels == other)].mean())
            for other in np.unique(labels)
            if other != labels[i]
        )
        denominator = max(a, b)
        scores.append(0.0 if denominator == 0 else (b - a) / denominator)
    return float(np.mean(scores))


@dataclass
class ClusteringResult:
    """Chosen clustering plus the silhouette sweep that selected it."""

    assignments: list[int]
    k: int
    silhouette: float
    per_k_silhouette: dict[int, float]
    degenerate: bool

    def as_dict(self) -> dict:
        return {
            "assignments": list(self.assignments),
            "k": self.k,
            "silhouette": self.silhouette,
            "per_k_silhouette": {str(k): v for k, v in sorted(self.per_k_silhouette.items())},
            "degenerate": self.degenerate,
        }


def cluster(
    kernel: np.ndarray,
    k_range: Iterable[int] = DEFAULT_K_RANGE,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
) -> ClusteringResult:
    """Kernel K-means with a silhouette sweep over k_range.

    Deterministic given the seed: every (k, restart) derives its own RNG.
    The chosen K maximizes mean silhouette; ties pick the smallest K.
    """
    m = kernel.shape[0]
    if m < 3:
        raise ValueError(f"need at least 3 graphs to cluster, got {m}")
    candidates = [k for k in k_range if 2 <= k <= m - 1]
    if not candidates:
        raise ValueError(f"no usable K in range for {m} graphs")
    distances = kernel_distances(kernel)
    degenerate = bool(np.allclose(distances, 0.0))
    best: tuple[float, int, np.ndarray] | None = None
    per_k: dict[int, float] = {}
    for k in sorted(candidates):
        best_for_k: tuple[float, np.ndarray] | None = None
        for restart in range(restarts):
            rng = np.random.default_rng((seed, k, restart))
            assignments = _kernel_kmeans_once(kernel, k, rng)
            objective = _objective(kernel, assignments)
            if best_for_k is None or objective < best_for_k[0] - 1e-12:
                best_for_k = (objective, assignments)
        assert best_for_k is not None
        score = silhouette_score(distances, best_for_k[1])
        per_k[k] = score
        if best is None or score > best[0] + 1e-12:
            best = (score, k, best_for_k[1])
    assert best is not None
    return ClusteringResult(
        assignments=[int(c) for c in best[2]],
        k=best[1],
        silhouette=best[0],
        per_k_silhouette=per_k,
        degenerate=degenerate,
    )


def intra_inter_ratio(kernel: np.ndarray, assignments: Sequence[int]) -> float:
    """Mean within-cluster similarity over mean cross-cluster similarity."""
    labels = np.asarray(assignments)
    m = kernel.shape[0]
    intra, inter = [], []
    for i in range(m):
        for j in range(i + 1, m):
            (intra if labels[i] == labels[j] else inter).append(float(kernel[i, j]))
    if not intra:
        raise ValueError("all clusters are singletons: intra similarity undefined")
    if not inter:
        raise ValueError("single cluster: inter similarity undefined")
    mean_inter = float(np.mean(inter))
    mean_intra = float(np.mean(intra))
    return float("inf") if mean_inter == 0 else mean_intra / mean_inter


@dataclass
class CategoryProfile:
    """One cluster of services with within-category occurrence probabilities."""

    category: int
    services: dict[str, int]
    occurrence: dict[str, float]
    silhouette: float

    def as_dict(self) -> dict:
        return {
            "category": self.category,
            "services": {k: self.services[k] for k in sorted(self.services)},
            "occurrence": {k: self.occurrence[k] for k in sorted(self.occurrence)},
            "silhouette": self.silhouette,
        }


def category_profiles(
    service_totals: Mapping[str, int],
    assignments: Mapping[str, int],
    silhouette: float = 0.0,
) -> list[CategoryProfile]:
    """Group services by cluster; occurrence sums to 1 within each category.

    A service's occurrence probability within its category is proportional
    to its total query count; the raw counts ride along so downstream
    samplers can stay on exact integers.
    """
    by_category: dict[int, dict[str, int]] = {}
    for service, category in assignments.items():
        total = service_totals[service]
        if total < 1:
            raise ValueError(f"service {service!r} has no queries")
        by_category.setdefault(category, {})[service] = total
    return [
        CategoryProfile(
            category=category,
            services=members,
            occurrence={
                service: count / sum(members.values())
                for service, count in members.items()
            },
            silhouette=silhouette,
        )
        for category, members in sorted(by_category.items())
    ]
