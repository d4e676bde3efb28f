"""Queue-based generation: exactness, truncation, determinism, workers."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svcgraph.generate import (
    GenerationStats,
    generate_call_graph,
    generate_corpus,
)
from svcgraph.graphs import (
    assign_labels,
    dependency_graph_to_dict,
    graph_stats,
    merge_dependency_graph,
)
from svcgraph.model import StrictContextError, build_model, load_model
from svcgraph.pipeline import ingest_records

from helpers import (
    _chain_service,
    demo_model,
    demo_trace_rows,
    random_tree_graph,
    random_tree_service,
)


def single_graph_model(seed: int):
    """A one-call-graph service and its model."""
    rng = np.random.default_rng(seed)
    graphs = assign_labels([random_tree_graph(rng, service_id="one")])
    dep = merge_dependency_graph(graphs)
    return dep, build_model(dep)


class TestGenerateOne:
    def test_single_outcome_corpus_regenerates(self):
        rows = []
        for i in range(4):
            rows.extend(demo_trace_rows(f"t{i}", 60_000, 1))
        dep = ingest_records(rows, top_fraction=1.0).services["S"].dependency
        model = build_model(dep)
        rng = np.random.default_rng(0)
        for _ in range(10):
            graph = generate_call_graph(model, rng, strict=True)
            assert graph.canonical_key == dep.call_graphs[0].canonical_key
            assert graph.count == 1

    def test_max_depth_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            generate_call_graph(demo_model(), np.random.default_rng(0), max_depth=1)

    def test_truncation_counter(self):
        dep = _chain_service("chain", branches=1, hops=3)
        model = build_model(dep)
        stats = GenerationStats()
        rng = np.random.default_rng(0)
        for _ in range(10):
            graph = generate_call_graph(model, rng, max_depth=3, stats=stats)
            assert graph_stats(graph).depth == 3
        assert stats.truncations == 10

    def test_no_truncation_when_depth_suffices(self):
        dep = _chain_service("chain", branches=1, hops=3)
        model = build_model(dep)
        stats = GenerationStats()
        graph = generate_call_graph(
            model, np.random.default_rng(0), max_depth=10, stats=stats
        )
        assert stats.truncations == 0
        assert graph.canonical_key == dep.call_graphs[0].canonical_key

    def test_stateful_vertices_never_expand(self):
        data = {
            "schema": "random_graph_model/v1",
            "service_id": "S",
            "entry": {"ms_name": "A", "interface": "NONE", "label": "relay"},
            "entry_mode": "http",
            "total_queries": 1,
            "contexts": [
                {
                    "u": ["A", "NONE"],
                    "depth": 1,
                    "siblings": [],
                    "outcomes": [
                        {"children": [["S", "f", 1, "db", "database"]], "count": 1}
                    ],
                },
                {
                    "u": ["S", "f"],
                    "depth": 2,
                    "siblings": [],
                    "outcomes": [
                        {"children": [["T", "g", 1, "rpc", "leaf"]], "count": 1}
                    ],
                },
            ],
        }
        model = load_model(data)
        graph = generate_call_graph(model, np.random.default_rng(0))
        assert [e.dm.ms_name for e in graph.edges] == ["S"]

    @given(st.integers(min_value=0, max_value=3_000))
    def test_single_graph_services_regenerate_exactly(self, seed):
        dep, model = single_graph_model(seed)
        rng = np.random.default_rng(seed)
        graph = generate_call_graph(model, rng, strict=True)
        assert graph.canonical_key == dep.call_graphs[0].canonical_key

    @given(st.integers(min_value=0, max_value=3_000))
    def test_strict_mode_is_safe_on_tree_corpora(self, seed):
        # Multi-graph services may recombine outcomes across member graphs,
        # so the output need not be a member; it must be valid and never
        # trip the strict-context check.
        rng = np.random.default_rng(seed)
        dep = random_tree_service(rng)
        model = build_model(dep)
        for i in range(15):
            graph = generate_call_graph(
                model, np.random.default_rng((seed, i)), strict=True
            )
            graph.validate()
            assert graph.entry == dep.entry
            assert graph.service_id == dep.service_id


class TestGenerateCorpus:
    def test_counts_add_up(self):
        model = demo_model()
        result = generate_corpus({"S": model}, {"S": 10}, count=500, seed=3)
        assert result.dependency.total_queries == 500
        assert sum(result.stats.service_counts.values()) == 500
        assert result.stats.service_counts["S"] == 500

    def test_demo_frequencies_are_plausible(self):
        model = demo_model()
        result = generate_corpus({"S": model}, {"S": 10}, count=2000, seed=11)
        by_key = {g.canonical_key: g.count for g in result.unique_graphs}
        ordered = sorted(by_key.values(), reverse=True)
        assert len(ordered) == 3
        for got, want in zip(ordered, (0.6, 0.3, 0.1)):
            assert abs(got / 2000 - want) < 0.05

    def test_same_seed_same_corpus(self):
        model = demo_model()
        runs = [
            generate_corpus({"S": model}, {"S": 10}, count=300, seed=42)
            for _ in range(2)
        ]
        assert dependency_graph_to_dict(runs[0].dependency) == (
            dependency_graph_to_dict(runs[1].dependency)
        )
        assert runs[0].stats.as_dict() == runs[1].stats.as_dict()

    def test_different_seeds_differ(self):
        model = demo_model()
        one = generate_corpus({"S": model}, {"S": 10}, count=200, seed=0)
        two = generate_corpus({"S": model}, {"S": 10}, count=200, seed=1)
        counts = lambda r: {g.canonical_key: g.count for g in r.unique_graphs}
        assert counts(one) != counts(two)

    @pytest.mark.parametrize("workers", [2, 3, 8])
    def test_worker_count_does_not_change_output(self, workers):
        model = demo_model()
        serial = generate_corpus({"S": model}, {"S": 10}, count=120, seed=9)
        pooled = generate_corpus(
            {"S": model}, {"S": 10}, count=120, seed=9, workers=workers
        )
        assert dependency_graph_to_dict(serial.dependency) == (
            dependency_graph_to_dict(pooled.dependency)
        )
        assert serial.stats.as_dict() == pooled.stats.as_dict()

    def test_mixed_services_need_target_id(self):
        _, model_a = single_graph_model(1)
        _, model_b = single_graph_model(2)
        models = {"a": model_a, "b": model_b}
        with pytest.raises(ValueError):
            generate_corpus(models, {"a": 3, "b": 1}, count=40, seed=0)
        result = generate_corpus(
            models, {"a": 3, "b": 1}, count=400, seed=0, target_service_id="mix"
        )
        assert result.dependency.service_id == "mix"
        share = result.stats.service_counts["a"] / 400
        assert abs(share - 0.75) < 0.1

    def test_input_validation(self):
        model = demo_model()
        with pytest.raises(ValueError):
            generate_corpus({"S": model}, {"S": 10}, count=0, seed=0)
        with pytest.raises(ValueError):
            generate_corpus({"S": model}, {"S": -1}, count=5, seed=0)
        with pytest.raises(ValueError):
            generate_corpus({"S": model}, {"S": 0}, count=5, seed=0)
        with pytest.raises(ValueError):
            generate_corpus({"S": model}, {"S": 1, "ghost": 1}, count=5, seed=0)

    def test_strict_corpus_on_demo(self):
        # The demo corpus is tree-positioned, so strict generation never backs off.
        model = demo_model()
        result = generate_corpus({"S": model}, {"S": 10}, count=400, seed=5, strict=True)
        assert result.stats.backoffs.total == 0
        assert result.stats.truncations == 0


class TestGenerationStats:
    def test_merge_accumulates(self):
        a = GenerationStats(truncations=1)
        a.backoffs.record("sibling_backoff")
        a.service_counts["x"] += 2
        b = GenerationStats(truncations=4)
        b.backoffs.record("sibling_backoff")
        b.service_counts["x"] += 1
        b.service_counts["y"] += 1
        a.merge(b)
        assert a.truncations == 5
        assert a.backoffs.as_dict() == {"sibling_backoff": 2}
        assert a.as_dict()["service_counts"] == {"x": 3, "y": 1}
