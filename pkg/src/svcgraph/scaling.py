"""Linear per-call-graph demand models and scaling-strategy simulation.

Each (microservice, call graph) pair gets a linear cores-vs-load model fit by
least squares.  Three allocation strategies are simulated per minute:

* fine: sum the per-call-graph predictions at their own loads (the demand).
* max:  evaluate every model of the microservice at its total coarse load
        and allocate the maximum prediction.
* min:  same, but allocate the minimum prediction.

The coarse strategies cannot see the per-graph load mix, only the total, so
max over-provisions and min under-provisions whenever per-query demand
differs across call graphs.  An interval violates QoS for a strategy when
any microservice receives less than its fine-grained demand.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

STRATEGIES = ("fine", "max", "min")

TIMELINE_HEADER = ("minute", "cg_id", "qpm")

DEMAND_MODELS_SCHEMA = "demand_models/v1"


class SingularFitError(ValueError):
    """A (ms, cg) sample group has fewer than two distinct loads."""


@dataclass(frozen=True)
class LinearDemandModel:
    """cores ~= slope * load + intercept, clamped at zero."""

    ms: str
    cg: str
    slope: float
    intercept: float

    def predict(self, load: float) -> float:
        return max(0.0, self.slope * load + self.intercept)


@dataclass
class FitResult:
    models: dict[tuple[str, str], LinearDemandModel]
    residuals: dict[tuple[str, str], dict[str, float]]


def fit_demand_models(
    samples: Iterable[tuple[str, str, float, float]]
) -> FitResult:
    """Least-squares lines per (ms, cg) from (ms, cg, load, cores) samples."""
    grouped: dict[tuple[str, str], list[tuple[float, float]]] = defaultdict(list)
    for ms, cg, load, cores in samples:
        grouped[(ms, cg)].append((float(load), float(cores)))
    models: dict[tuple[str, str], LinearDemandModel] = {}
    residuals: dict[tuple[str, str], dict[str, float]] = {}
    for key in sorted(grouped):
        points = grouped[key]
        loads = [x for x, _ in points]
        cores = [y for _, y in points]
        if len(set(loads)) < 2:
            raise SingularFitError(
                f"(ms={key[0]!r}, cg={key[1]!r}): need >= 2 distinct loads to fit a line"
            )
        n = len(points)
        mean_x = sum(loads) / n
        mean_y = sum(cores) / n
        var_x = sum((x - mean_x) ** 2 for x in loads)
        cov_xy = sum((x - mean_x) * (y - mean_y) for x, y in points)
        slope = cov_xy / var_x
        intercept = mean_y - slope * mean_x
        models[key] = LinearDemandModel(key[0], key[1], slope, intercept)
        errors = [y - (slope * x + intercept) for x, y in points]
        residuals[key] = {
            "rmse": (sum(e * e for e in errors) / n) ** 0.5,
            "max_abs": max(abs(e) for e in errors),
        }
    return FitResult(models=models, residuals=residuals)


@dataclass
class LoadTimeline:
    """Per-call-graph queries-per-minute over a contiguous minute range."""

    loads: dict[str, list[float]]
    minutes: int

    def __post_init__(self) -> None:
        for cg, series in self.loads.items():
            if len(series) != self.minutes:
                raise ValueError(
                    f"call graph {cg!r} has {len(series)} bins, expected {self.minutes}"
                )
            if any(value < 0 for value in series):
                raise ValueError(f"call graph {cg!r} has negative load")

    @property
    def cg_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.loads))

    @staticmethod
    def from_rows(rows: Iterable[tuple[int, str, float]]) -> "LoadTimeline":
        """Build a dense timeline from sparse (minute, cg_id, qpm) rows."""
        collected = list(rows)
        if not collected:
            raise ValueError("empty timeline")
        last = max(minute for minute, _, _ in collected)
        if min(minute for minute, _, _ in collected) < 0:
            raise ValueError("negative minute index")
        loads: dict[str, list[float]] = {
            cg: [0.0] * (last + 1) for _, cg, _ in collected
        }
        for minute, cg, qpm in collected:
            loads[cg][minute] += float(qpm)
        return LoadTimeline(loads=loads, minutes=last + 1)


def parse_timeline(lines: Iterable[str]) -> LoadTimeline:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TIMELINE_HEADER:
        raise ValueError(f"timeline header must be {','.join(TIMELINE_HEADER)!r}")
    rows = []
    for row in reader:
        if not row:
            continue
        minute, cg, qpm = row
        rows.append((int(minute), cg.strip(), float(qpm)))
    return LoadTimeline.from_rows(rows)


def write_timeline(timeline: LoadTimeline) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TIMELINE_HEADER)
    for cg in timeline.cg_ids:
        for minute, qpm in enumerate(timeline.loads[cg]):
            writer.writerow([minute, cg, repr(qpm) if qpm != int(qpm) else int(qpm)])
    return buffer.getvalue()


def _models_by_ms(
    models: Mapping[tuple[str, str], LinearDemandModel]
) -> dict[str, dict[str, LinearDemandModel]]:
    by_ms: dict[str, dict[str, LinearDemandModel]] = defaultdict(dict)
    for (ms, cg), model in models.items():
        by_ms[ms][cg] = model
    return dict(by_ms)


def allocate(
    ms: str,
    timeline: LoadTimeline,
    models: Mapping[tuple[str, str], LinearDemandModel],
    strategy: str,
) -> list[float]:
    """Per-minute core allocation for one microservice under a strategy.

    The coarse strategies (max, min) evaluate every model of the
    microservice at its summed load; with no load at all they allocate zero,
    which keeps min <= fine <= max at idle intervals.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; want one of {STRATEGIES}")
    mine = _models_by_ms(models).get(ms)
    if not mine:
        raise ValueError(f"no demand models for microservice {ms!r}")
    covered = [cg for cg in sorted(mine) if cg in timeline.loads]
    series: list[float] = []
    for t in range(timeline.minutes):
        if strategy == "fine":
            value = sum(
                mine[cg].predict(timeline.loads[cg][t])
                for cg in covered
                if timeline.loads[cg][t] > 0
            )
        else:
            coarse = sum(timeline.loads[cg][t] for cg in covered)
            if coarse <= 0:
                value = 0.0
            else:
                predictions = [mine[cg].predict(coarse) for cg in covered]
                value = max(predictions) if strategy == "max" else min(predictions)
        series.append(value)
    return series


@dataclass
class StrategyOutcome:
    core_hours: float
    normalized_core_hours: float
    violation_fraction: float
    violated_intervals: int

    def as_dict(self) -> dict:
        return {
            "core_hours": self.core_hours,
            "normalized_core_hours": self.normalized_core_hours,
            "violation_fraction": self.violation_fraction,
            "violated_intervals": self.violated_intervals,
        }


@dataclass
class SimulationReport:
    minutes: int
    microservices: list[str]
    outcomes: dict[str, StrategyOutcome]
    allocations: dict[str, dict[str, list[float]]]  # strategy -> ms -> series

    def as_dict(self) -> dict:
        return {
            "minutes": self.minutes,
            "microservices": self.microservices,
            "outcomes": {name: o.as_dict() for name, o in sorted(self.outcomes.items())},
        }


def simulate(
    timeline: LoadTimeline,
    models: Mapping[tuple[str, str], LinearDemandModel],
    strategies: Sequence[str] = STRATEGIES,
) -> SimulationReport:
    """Run all strategies; fine-grained demand defines QoS violations."""
    known_cgs = {cg for _, cg in models}
    for cg, series in timeline.loads.items():
        if any(value > 0 for value in series) and cg not in known_cgs:
            raise ValueError(f"timeline call graph {cg!r} has load but no models")
    names = sorted({ms for ms, _ in models})
    allocations = {
        strategy: {ms: allocate(ms, timeline, models, strategy) for ms in names}
        for strategy in strategies
    }
    if "fine" not in allocations:
        demand = {ms: allocate(ms, timeline, models, "fine") for ms in names}
    else:
        demand = allocations["fine"]
    fine_core_hours = sum(sum(series) for series in demand.values()) / 60.0
    outcomes: dict[str, StrategyOutcome] = {}
    for strategy in strategies:
        series_by_ms = allocations[strategy]
        core_hours = sum(sum(series) for series in series_by_ms.values()) / 60.0
        violated = 0
        for t in range(timeline.minutes):
            if any(
                series_by_ms[ms][t] < demand[ms][t] - 1e-9 for ms in names
            ):
                violated += 1
        outcomes[strategy] = StrategyOutcome(
            core_hours=core_hours,
            normalized_core_hours=(
                core_hours / fine_core_hours if fine_core_hours > 0 else 0.0
            ),
            violation_fraction=violated / timeline.minutes if timeline.minutes else 0.0,
            violated_intervals=violated,
        )
    return SimulationReport(
        minutes=timeline.minutes,
        microservices=names,
        outcomes=outcomes,
        allocations=allocations,
    )


# --- serialization ----------------------------------------------------------


def models_to_dict(fit: FitResult) -> dict:
    return {
        "schema": DEMAND_MODELS_SCHEMA,
        "models": [
            {
                "ms": model.ms,
                "cg": model.cg,
                "slope": model.slope,
                "intercept": model.intercept,
            }
            for _, model in sorted(fit.models.items())
        ],
        "residuals": [
            {"ms": key[0], "cg": key[1], **values}
            for key, values in sorted(fit.residuals.items())
        ],
    }


def models_from_dict(data: Mapping) -> dict[tuple[str, str], LinearDemandModel]:
    if data.get("schema") != DEMAND_MODELS_SCHEMA:
        raise ValueError(f"unexpected demand model schema: {data.get('schema')!r}")
    models: dict[tuple[str, str], LinearDemandModel] = {}
    for row in data["models"]:
        key = (row["ms"], row["cg"])
        if key in models:
            raise ValueError(f"duplicate demand model for {key!r}")
        models[key] = LinearDemandModel(
            ms=row["ms"],
            cg=row["cg"],
            slope=float(row["slope"]),
            intercept=float(row["intercept"]),
        )
    return models
