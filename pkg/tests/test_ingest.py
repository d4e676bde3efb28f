"""Trace parsing, span-forest assembly, and top-fraction filtering."""

from __future__ import annotations

import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

import helpers
from svcgraph.ingest import (
    COMM_MODES,
    TraceFormatError,
    TraceRecord,
    build_span_forest,
    filter_top_fraction,
    parent_rpc_id,
    parse_trace,
    span_depth,
    write_trace,
)

HEADER = "timestamp_ms,trace_id,service_id,rpc_id,um_name,dm_name,interface,comm_mode"


def _parse(*rows: str):
    return parse_trace(io.StringIO("\n".join([HEADER, *rows]) + "\n"))


class TestParseTrace:
    def test_entry_row_parses(self):
        result = _parse("5,t1,svc1,0,USER,A,NONE,http")
        assert len(result.records) == 1 and not result.rejects
        record = result.records[0]
        assert record.depth() == 1
        assert (record.um_name, record.dm_name) == ("USER", "A")

    def test_unknown_comm_mode_rejected(self):
        result = _parse("5,t1,svc1,0,USER,A,NONE,grpc")
        assert not result.records
        assert len(result.rejects) == 1
        assert "grpc" in result.rejects[0]

    def test_duplicate_rpc_id_rejected(self):
        result = _parse(
            "5,t1,svc1,0,USER,A,NONE,http",
            "6,t1,svc1,0,USER,A,NONE,http",
        )
        assert len(result.records) == 1
        assert len(result.rejects) == 1

    def test_bad_rpc_id_rejected(self):
        result = _parse("5,t1,svc1,0.x.1,A,B,f,rpc")
        assert not result.records and len(result.rejects) == 1

    def test_entry_must_come_from_user(self):
        result = _parse("5,t1,svc1,0,A,B,f,rpc")
        assert not result.records and len(result.rejects) == 1

    def test_missing_header_fatal(self):
        with pytest.raises(TraceFormatError):
            parse_trace(io.StringIO("5,t1,svc1,0,USER,A,NONE,http\n"))

    def test_wrong_column_count_rejected(self):
        result = _parse("5,t1,svc1,0,USER,A,NONE")
        assert not result.records and len(result.rejects) == 1

    def test_demo_file_parses_clean(self):
        text = write_trace(helpers.demo_records())
        result = parse_trace(io.StringIO(text))
        assert len(result.records) == 38
        assert not result.rejects

    def test_reject_lines_carry_line_numbers(self):
        result = _parse(
            "5,t1,svc1,0,USER,A,NONE,http",
            "bad row",
        )
        assert result.rejects[0].startswith("line 3")


records_strategy = st.builds(
    TraceRecord,
    timestamp_ms=st.integers(min_value=0, max_value=10**12),
    trace_id=st.text(alphabet="abcdef0123456789", min_size=1, max_size=8),
    service_id=st.sampled_from(["s1", "s2"]),
    rpc_id=st.from_regex(r"0(\.[0-9]{1,2}){0,3}", fullmatch=True),
    um_name=st.sampled_from(["USER", "A", "B"]),
    dm_name=st.sampled_from(["A", "B", "C"]),
    interface=st.sampled_from(["NONE", "f1", "f2"]),
    comm_mode=st.sampled_from(COMM_MODES),
)


class TestRoundTrip:
    @given(st.lists(records_strategy, max_size=20))
    def test_write_then_parse_is_identity_on_valid_records(self, records):
        valid = []
        seen = set()
        for record in records:
            key = (record.trace_id, record.rpc_id)
            entry_ok = record.rpc_id != "0" or record.um_name == "USER"
            if key not in seen and entry_ok:
                seen.add(key)
                valid.append(record)
        result = parse_trace(io.StringIO(write_trace(valid)))
        assert result.records == valid and not result.rejects

    @given(st.from_regex(r"0(\.[0-9]{1,2}){0,5}", fullmatch=True))
    def test_depth_counts_dotted_segments(self, rpc_id):
        assert span_depth(rpc_id) == rpc_id.count(".") + 1
        parent = parent_rpc_id(rpc_id)
        if span_depth(rpc_id) == 1:
            assert parent is None
        else:
            assert rpc_id.startswith(parent + ".")


class TestSpanForest:
    def test_complete_chain_builds_one_tree(self):
        records = [
            TraceRecord(1, "t", "s", "0", "USER", "A", "NONE", "http"),
            TraceRecord(2, "t", "s", "0.1", "A", "B", "f", "rpc"),
            TraceRecord(3, "t", "s", "0.1.1", "B", "C", "g", "rpc"),
        ]
        forest = build_span_forest(records)
        assert len(forest.trees) == 1 and forest.dropped == 0
        tree = forest.trees[("s", "t")]
        assert tree.root.rpc_id == "0"
        assert [r.rpc_id for r in tree.child_records("0.1")] == ["0.1.1"]

    def test_missing_ancestor_drops_whole_trace(self):
        records = [
            TraceRecord(1, "t", "s", "0", "USER", "A", "NONE", "http"),
            TraceRecord(3, "t", "s", "0.1.1", "B", "C", "g", "rpc"),
        ]
        forest = build_span_forest(records)
        assert not forest.trees and forest.dropped == 1
        assert forest.drop_reasons["missing ancestor"] == 1

    def test_um_dm_mismatch_drops_trace(self):
        records = [
            TraceRecord(1, "t", "s", "0", "USER", "A", "NONE", "http"),
            TraceRecord(2, "t", "s", "0.1", "X", "B", "f", "rpc"),
        ]
        forest = build_span_forest(records)
        assert not forest.trees and forest.dropped == 1

    def test_demo_corpus_builds_ten_trees(self):
        forest = build_span_forest(helpers.demo_records())
        assert len(forest.trees) == 10 and forest.dropped == 0

    def test_traces_isolated_by_service_and_trace_id(self):
        records = [
            TraceRecord(1, "t", "s1", "0", "USER", "A", "NONE", "http"),
            TraceRecord(1, "t", "s2", "0", "USER", "A", "NONE", "http"),
        ]
        forest = build_span_forest(records)
        assert set(forest.trees) == {("s1", "t"), ("s2", "t")}


class TestFilterTopFraction:
    def test_spec_boundary_is_exact(self):
        assert filter_top_fraction({"a": 6, "b": 3, "c": 1}, 0.9) == ["a", "b"]

    def test_dominant_item_alone_suffices(self):
        assert filter_top_fraction({"a": 9, "b": 1}, 0.9) == ["a"]

    def test_full_fraction_keeps_everything(self):
        counts = {"a": 5, "b": 4, "c": 1}
        assert set(filter_top_fraction(counts, 1.0)) == set(counts)

    def test_ties_break_by_ascending_key(self):
        assert filter_top_fraction({"b": 5, "a": 5}, 0.5) == ["a"]

    @given(
        st.dictionaries(
            st.text("ab", min_size=1, max_size=3),
            st.integers(min_value=1, max_value=50),
            min_size=1,
            max_size=8,
        ),
        st.floats(min_value=0.01, max_value=1.0),
    )
    def test_retained_mass_reaches_fraction(self, counts, fraction):
        kept = filter_top_fraction(counts, fraction)
        total = sum(counts.values())
        assert sum(counts[k] for k in kept) >= fraction * total - 1e-9
        if len(kept) > 1:
            without_last = kept[:-1]
            assert sum(counts[k] for k in without_last) < fraction * total + 1e-9

    @given(
        st.dictionaries(
            st.text("abc", min_size=1, max_size=3),
            st.integers(min_value=1, max_value=50),
            min_size=1,
            max_size=8,
        )
    )
    def test_monotone_in_fraction(self, counts):
        smaller = set(filter_top_fraction(counts, 0.5))
        larger = set(filter_top_fraction(counts, 0.9))
        assert smaller <= larger
