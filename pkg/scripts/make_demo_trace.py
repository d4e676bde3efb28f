"""Write the demo trace: one service, 10 traces over 3 call-graph shapes.

Shape 1 (6 traces): A calls B.f1 once (rpc), B.f1 calls D.g twice (mc).
Shape 2 (3 traces): A calls B.f1 and C.h (rpc), B.f1 calls E.k once (db).
Shape 3 (1 trace):  A calls C.h once (rpc).

All traces land in the same minute, so the time series has a single bin
with totals (10; 6, 3, 1).
"""

from __future__ import annotations

import argparse

from svcgraph.ingest import TraceRecord, write_trace_file

SERVICE = "S"


def _rows(trace_id: str, timestamp: int, shape: int) -> list[TraceRecord]:
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
    records = []
    shapes = [1] * 6 + [2] * 3 + [3]
    for index, shape in enumerate(shapes):
        records.extend(_rows(f"t{index:02d}", 60_000 + index * 1_000, shape))
    return records


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo_trace.csv", help="output CSV path")
    args = parser.parse_args()
    records = demo_records()
    write_trace_file(records, args.out)
    print(f"wrote {len(records)} rows ({len({r.trace_id for r in records})} traces) to {args.out}")


if __name__ == "__main__":
    main()
