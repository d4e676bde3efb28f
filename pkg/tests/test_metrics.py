"""Distribution families and Jensen-Shannon divergence, against hand values."""

from __future__ import annotations

import json
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from svcgraph.graphs import CallEdge, FineCallGraph, Vertex, assign_labels
from svcgraph.metrics import (
    DistributionReport,
    compare_corpora,
    extract_distributions,
    js_divergence,
)

from helpers import demo_dependency


@pytest.fixture(scope="module")
def report():
    return extract_distributions(demo_dependency().call_graphs)


def corpus_of(*edge_lists, counts=None) -> list[FineCallGraph]:
    entry = Vertex("A", "NONE")
    graphs = []
    for i, edges in enumerate(edge_lists):
        built = [
            CallEdge(depth, Vertex(um, uif), Vertex(dm, dif), w, mode)
            for depth, um, uif, dm, dif, w, mode in edges
        ]
        count = counts[i] if counts else 1
        graphs.append(FineCallGraph.from_edges("S", entry, built, count=count))
    return assign_labels(graphs)


class TestJsDivergence:
    def test_identical_is_zero(self):
        assert js_divergence({1: 0.4, 2: 0.6}, {1: 0.4, 2: 0.6}) == 0.0

    def test_disjoint_is_one(self):
        assert js_divergence({"a": 1.0}, {"b": 1.0}) == pytest.approx(1.0)

    def test_half_overlap_reference_value(self):
        # ({.5, .5} vs {1}) is the standard worked example: about 0.3113.
        assert js_divergence({"a": 0.5, "b": 0.5}, {"a": 1.0}) == pytest.approx(
            0.311278, abs=1e-4
        )

    def test_dense_vectors_accepted(self):
        assert js_divergence([0.5, 0.5], [1.0, 0.0]) == pytest.approx(
            0.311278, abs=1e-4
        )

    def test_symmetry_of_reference_value(self):
        assert js_divergence({"a": 1.0}, {"a": 0.5, "b": 0.5}) == pytest.approx(
            js_divergence({"a": 0.5, "b": 0.5}, {"a": 1.0})
        )

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            js_divergence({"a": 0.5}, {"a": 1.0})
        with pytest.raises(ValueError):
            js_divergence({"a": 1.0}, {"a": 0.7, "b": 0.4})

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            js_divergence({"a": 1.5, "b": -0.5}, {"a": 1.0})

    @given(
        st.lists(st.floats(min_value=0.01, max_value=10), min_size=1, max_size=8),
        st.lists(st.floats(min_value=0.01, max_value=10), min_size=1, max_size=8),
    )
    def test_symmetric_and_bounded(self, raw_p, raw_q):
        p = {i: v / sum(raw_p) for i, v in enumerate(raw_p)}
        q = {i: v / sum(raw_q) for i, v in enumerate(raw_q)}
        forward = js_divergence(p, q)
        assert forward == pytest.approx(js_divergence(q, p))
        assert 0.0 <= forward <= 1.0
        assert js_divergence(p, p) == 0.0


class TestExtractDistributions:
    def test_demo_depth_pmf(self, report):
        assert report.depth_pmf == pytest.approx({2: 0.1, 3: 0.9})

    def test_demo_size_pmf(self, report):
        assert report.size_pmf == pytest.approx({2: 0.1, 3: 0.6, 4: 0.3})

    def test_demo_width_vector(self, report):
        assert report.width_vector == pytest.approx(
            {1: 10 / 32, 2: 13 / 32, 3: 9 / 32}
        )

    def test_demo_label_pmfs(self, report):
        assert report.label_pmfs[1] == pytest.approx({"relay": 1.0})
        assert report.label_pmfs[2] == pytest.approx(
            {"relay": 9 / 13, "leaf": 4 / 13}
        )
        assert report.label_pmfs[3] == pytest.approx(
            {"memcached": 6 / 9, "database": 3 / 9}
        )
        assert report.label_mass == pytest.approx(
            {1: 10 / 32, 2: 13 / 32, 3: 9 / 32}
        )

    def test_demo_mode_pmfs(self, report):
        assert report.mode_pmfs[2] == pytest.approx({"rpc": 1.0})
        assert report.mode_pmfs[3] == pytest.approx({"mc": 12 / 15, "db": 3 / 15})
        assert report.mode_mass == pytest.approx({2: 13 / 28, 3: 15 / 28})

    def test_counts_equal_expanded_copies(self):
        weighted = demo_dependency().call_graphs
        expanded = []
        for graph in weighted:
            expanded.extend(replace(graph, count=1) for _ in range(graph.count))
        assert extract_distributions(weighted).as_dict() == (
            extract_distributions(expanded).as_dict()
        )

    def test_depth_cap_truncates_and_renormalizes(self):
        report = extract_distributions(demo_dependency().call_graphs, depth_cap=2)
        assert report.depth_pmf == pytest.approx({2: 1.0})
        assert sorted(report.label_pmfs) == [1, 2]

    def test_no_mass_within_support_rejected(self):
        with pytest.raises(ValueError):
            extract_distributions(demo_dependency().call_graphs, size_cap=1)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            extract_distributions([])

    def test_round_trip_through_dict(self, report):
        data = json.loads(json.dumps(report.as_dict()))
        assert DistributionReport.from_dict(data) == report


class TestCompareCorpora:
    def test_self_comparison_is_zero(self, report):
        summary = compare_corpora(report, report)
        assert summary.depth == 0.0
        assert summary.width == 0.0
        assert summary.size == 0.0
        assert summary.labels == 0.0
        assert summary.comm_modes == 0.0

    def test_cap_mismatch_rejected(self, report):
        other = extract_distributions(demo_dependency().call_graphs, depth_cap=5)
        with pytest.raises(ValueError):
            compare_corpora(report, other)

    def test_hand_computed_mass_weighted_labels(self):
        # X: A -> B (leaf at depth 2).  Y: A -> B -> Z (B relay, Z leaf).
        x = extract_distributions(
            corpus_of([(1, "A", "NONE", "B", "f", 1, "rpc")])
        )
        y = extract_distributions(
            corpus_of(
                [
                    (1, "A", "NONE", "B", "f", 1, "rpc"),
                    (2, "B", "f", "Z", "g", 1, "rpc"),
                ]
            )
        )
        summary = compare_corpora(x, y)
        assert summary.depth == pytest.approx(1.0)
        assert summary.labels_per_depth == pytest.approx({1: 0.0, 2: 1.0, 3: 1.0})
        # Averaged masses: depth1 5/12, depth2 5/12, depth3 1/6.
        assert summary.labels == pytest.approx(7 / 12)
        assert summary.comm_modes_per_depth == pytest.approx({2: 0.0, 3: 1.0})
        # Mode masses: X puts all mass at depth 2, Y half at 2 and half at 3.
        assert summary.comm_modes == pytest.approx(0.25)

    def test_one_sided_depth_is_maximal(self):
        shallow = extract_distributions(
            corpus_of([(1, "A", "NONE", "B", "f", 1, "rpc")])
        )
        deep = extract_distributions(
            corpus_of(
                [
                    (1, "A", "NONE", "B", "f", 1, "rpc"),
                    (2, "B", "f", "Z", "g", 1, "rpc"),
                ]
            )
        )
        assert compare_corpora(shallow, deep).labels_per_depth[3] == 1.0

    def test_as_dict_shape(self, report):
        data = compare_corpora(report, report).as_dict()
        assert set(data) == {
            "depth",
            "width",
            "size",
            "labels",
            "comm_modes",
            "labels_per_depth",
            "comm_modes_per_depth",
        }
