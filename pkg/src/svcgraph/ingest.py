"""Parsing, validation, and span-tree assembly for RPC trace CSVs.

Canonical row format (header required, column order fixed):

    timestamp_ms,trace_id,service_id,rpc_id,um_name,dm_name,interface,comm_mode

One row per span: the upstream microservice ``um_name`` calls interface
``interface`` of the downstream microservice ``dm_name``.  ``rpc_id`` is a
dotted path encoding the call position ("0" is the entry span, "0.1.2" is the
second call made by span "0.1").  Traces from different source formats are
adapted to this schema by a thin column mapping upstream of this module.
"""

from __future__ import annotations

import csv
import io
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, TypeVar

COMM_MODES = ("http", "rpc", "mq", "mc", "db")

TRACE_HEADER = (
    "timestamp_ms",
    "trace_id",
    "service_id",
    "rpc_id",
    "um_name",
    "dm_name",
    "interface",
    "comm_mode",
)

ENTRY_RPC_ID = "0"
ENTRY_UM_NAME = "USER"
ENTRY_INTERFACE = "NONE"

_RPC_ID_RE = re.compile(r"^\d+(\.\d+)*$")


class TraceFormatError(ValueError):
    """Raised when a trace file is unusable as a whole (e.g. bad header)."""


@dataclass(frozen=True)
class TraceRecord:
    """One validated span row."""

    timestamp_ms: int
    trace_id: str
    service_id: str
    rpc_id: str
    um_name: str
    dm_name: str
    interface: str
    comm_mode: str

    def depth(self) -> int:
        """Depth of the downstream vertex: segment count of rpc_id."""
        return span_depth(self.rpc_id)

    def as_row(self) -> tuple[str, ...]:
        return (
            str(self.timestamp_ms),
            self.trace_id,
            self.service_id,
            self.rpc_id,
            self.um_name,
            self.dm_name,
            self.interface,
            self.comm_mode,
        )


def span_depth(rpc_id: str) -> int:
    """Depth of the vertex a span lands on; the entry span "0" has depth 1."""
    return rpc_id.count(".") + 1


@dataclass
class ParseResult:
    """Validated records plus one diagnostic line per rejected row."""

    records: list[TraceRecord]
    rejects: list[str]

    @property
    def rejected_count(self) -> int:
        return len(self.rejects)


def _validate_row(row: Sequence[str], seen: set[tuple[str, str]]) -> TraceRecord | str:
    """Return a TraceRecord or a rejection reason string."""
    if len(row) != len(TRACE_HEADER):
        return f"expected {len(TRACE_HEADER)} fields, got {len(row)}"
    ts, trace_id, service_id, rpc_id, um_name, dm_name, interface, comm_mode = (
        field.strip() for field in row
    )
    try:
        timestamp_ms = int(ts)
    except ValueError:
        return f"timestamp_ms is not an integer: {ts!r}"
    if not trace_id or not service_id:
        return "empty trace_id or service_id"
    if not _RPC_ID_RE.match(rpc_id):
        return f"malformed rpc_id: {rpc_id!r}"
    if not um_name or not dm_name or not interface:
        return "empty um_name, dm_name, or interface"
    if comm_mode not in COMM_MODES:
        return f"unknown comm_mode: {comm_mode!r}"
    if rpc_id == ENTRY_RPC_ID and um_name != ENTRY_UM_NAME:
        return f"entry span must have um_name {ENTRY_UM_NAME!r}, got {um_name!r}"
    key = (trace_id, rpc_id)
    if key in seen:
        return f"duplicate (trace_id, rpc_id) = {key!r}"
    seen.add(key)
    return TraceRecord(
        timestamp_ms=timestamp_ms,
        trace_id=trace_id,
        service_id=service_id,
        rpc_id=rpc_id,
        um_name=um_name,
        dm_name=dm_name,
        interface=interface,
        comm_mode=comm_mode,
    )


def parse_trace(lines: Iterable[str]) -> ParseResult:
    """Parse trace CSV text into records, rejecting malformed rows.

    The header row must match TRACE_HEADER exactly; anything else is a
    file-level TraceFormatError.  Row-level problems (bad comm_mode, malformed
    rpc_id, duplicate span ids, wrong field count) reject the row only.
    """
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError("empty trace file: missing header") from None
    if tuple(field.strip() for field in header) != TRACE_HEADER:
        raise TraceFormatError(
            f"bad header: expected {','.join(TRACE_HEADER)!r}, got {','.join(header)!r}"
        )
    records: list[TraceRecord] = []
    rejects: list[str] = []
    seen: set[tuple[str, str]] = set()
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        outcome = _validate_row(row, seen)
        if isinstance(outcome, TraceRecord):
            records.append(outcome)
        else:
            rejects.append(f"line {line_no}: {outcome}")
    return ParseResult(records=records, rejects=rejects)


def parse_trace_file(path: str, rejects_path: str | None = None) -> ParseResult:
    """Parse a trace CSV file, optionally writing a .rejects sidecar."""
    with open(path, newline="") as handle:
        result = parse_trace(handle)
    if rejects_path is not None:
        with open(rejects_path, "w") as handle:
            for line in result.rejects:
                handle.write(line + "\n")
    return result


def write_trace(records: Iterable[TraceRecord]) -> str:
    """Serialize records back to canonical CSV text (parse round-trips)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for record in records:
        writer.writerow(record.as_row())
    return buffer.getvalue()


def write_trace_file(records: Iterable[TraceRecord], path: str) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(write_trace(records))


def _segments(rpc_id: str) -> tuple[int, ...]:
    return tuple(int(part) for part in rpc_id.split("."))


def parent_rpc_id(rpc_id: str) -> str | None:
    """Dotted prefix of a span id; None for the entry span."""
    head, _, _ = rpc_id.rpartition(".")
    return head or None


@dataclass
class SpanTree:
    """All spans of one (service_id, trace_id), wired parent to children.

    Invariants: exactly one root span with rpc_id "0" and um_name "USER";
    every other span's parent id exists; a span's um_name equals its parent
    span's dm_name.
    """

    trace_id: str
    service_id: str
    spans: dict[str, TraceRecord]
    children: dict[str, tuple[str, ...]]

    @property
    def root(self) -> TraceRecord:
        return self.spans[ENTRY_RPC_ID]

    def child_records(self, rpc_id: str) -> list[TraceRecord]:
        return [self.spans[child] for child in self.children.get(rpc_id, ())]


@dataclass
class ForestResult:
    """Span trees keyed by (service_id, trace_id), plus whole-trace drops."""

    trees: dict[tuple[str, str], SpanTree]
    dropped: int
    drop_reasons: Counter


def _assemble_tree(trace_id: str, service_id: str, spans: list[TraceRecord]) -> SpanTree | str:
    """Build one SpanTree or return the reason the trace must be dropped."""
    by_id: dict[str, TraceRecord] = {}
    for span in spans:
        if span.rpc_id in by_id:
            return "duplicate rpc_id"
        by_id[span.rpc_id] = span
    root = by_id.get(ENTRY_RPC_ID)
    if root is None:
        return "missing root span"
    if root.um_name != ENTRY_UM_NAME:
        return "root um_name is not USER"
    children: dict[str, list[str]] = {}
    for span in spans:
        if span.rpc_id == ENTRY_RPC_ID:
            continue
        parent = parent_rpc_id(span.rpc_id)
        if parent is None or parent not in by_id:
            return f"missing ancestor for span {span.rpc_id}"
        if span.um_name != by_id[parent].dm_name:
            return f"um/dm mismatch at span {span.rpc_id}"
        children.setdefault(parent, []).append(span.rpc_id)
    ordered = {
        parent: tuple(sorted(kids, key=_segments)) for parent, kids in children.items()
    }
    return SpanTree(trace_id=trace_id, service_id=service_id, spans=by_id, children=ordered)


def build_span_forest(records: Iterable[TraceRecord]) -> ForestResult:
    """Group records into per-(service, trace) span trees.

    A trace with a missing root, a missing ancestor, or an um/dm chain
    mismatch is dropped whole and counted, never partially repaired.
    """
    grouped: dict[tuple[str, str], list[TraceRecord]] = {}
    for record in records:
        grouped.setdefault((record.service_id, record.trace_id), []).append(record)
    trees: dict[tuple[str, str], SpanTree] = {}
    reasons: Counter = Counter()
    for (service_id, trace_id), spans in grouped.items():
        outcome = _assemble_tree(trace_id, service_id, spans)
        if isinstance(outcome, SpanTree):
            trees[(service_id, trace_id)] = outcome
        else:
            reasons[outcome.split(" for span")[0]] += 1
    return ForestResult(trees=trees, dropped=sum(reasons.values()), drop_reasons=reasons)


K = TypeVar("K")


def filter_top_fraction(counts: Mapping[K, int], fraction: float = 0.9) -> list[K]:
    """Keys covering at least `fraction` of the total count.

    Items are ranked by descending count with ties broken by ascending key;
    the smallest prefix whose cumulative count first reaches the target is
    retained.  fraction=1.0 keeps everything with a nonzero total.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    total = sum(counts.values())
    if total <= 0:
        return []
    # Fraction(str(...)) keeps decimal inputs like 0.9 exact at the boundary.
    target = Fraction(str(fraction)) * total
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    retained: list[K] = []
    cumulative = 0
    for key, count in ranked:
        retained.append(key)
        cumulative += count
        if cumulative >= target:
            break
    return retained
