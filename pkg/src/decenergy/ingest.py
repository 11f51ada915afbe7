"""Profiler-output and measurement-log ingestion.

Parses callgrind profiles, machine-readable perf stat output, and repeated
energy-measurement logs into the core types, and applies the measurement
quality gate (Student-t confidence interval on repeated readings).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset_io import load_dataset, read_dataset, save_dataset  # noqa: F401 (re-export)
from .errors import (
    EmptySeries,
    MalformedHeader,
    MissingCounter,
    MissingEvent,
    NegativeEnergy,
    NonNumericTotal,
    NonNumericValue,
    RowParseError,
    SchemaViolation,
    TooFewSamples,
    ZeroMean,
)
from .types import (
    CALLGRIND_EVENT_NAMES,
    PE_FIELD_ORDER,
    EnergySample,
    MeasurementSeries,
    MeasurementSetup,
    PerfCtcFeatures,
    ProcessorEventVector,
    SeriesLabel,
)


@dataclass(frozen=True)
class ConfidenceCheckResult:
    """Outcome of the repeated-measurement confidence gate."""

    passed: bool
    relative_halfwidth: float
    mean: float
    n: int


def parse_callgrind(text: str) -> ProcessorEventVector:
    """Extract program-total processor-event counts from a callgrind profile.

    Counts are taken from the profile's own ``summary:``/``totals:`` line and
    mapped by the ``events:`` header order, so a permuted header yields the
    same vector.
    """
    events: list[str] | None = None
    totals_line: str | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("events:"):
            events = line[len("events:"):].split()
        elif line.startswith("summary:") or line.startswith("totals:"):
            totals_line = line.split(":", 1)[1]
    if events is None:
        raise MalformedHeader("no 'events:' header line in callgrind output")
    if totals_line is None:
        raise MalformedHeader("no 'summary:' or 'totals:' line in callgrind output")

    values = totals_line.split()
    if len(values) != len(events):
        raise MalformedHeader(
            f"totals line has {len(values)} values but 'events:' names {len(events)} counters"
        )
    totals: dict[str, int] = {}
    for name, value in zip(events, values):
        try:
            totals[name] = int(value)
        except ValueError:
            raise NonNumericTotal(f"total for event '{name}' is not an integer: {value!r}") from None

    counts: dict[str, int] = {}
    for field, cg_name in zip(PE_FIELD_ORDER, CALLGRIND_EVENT_NAMES):
        if cg_name not in totals:
            raise MissingEvent(
                f"event '{cg_name}' missing from callgrind output; "
                "run callgrind with cache and branch simulation enabled"
            )
        counts[field] = totals[cg_name]
    return ProcessorEventVector.from_mapping(counts)


def _perf_separator(text: str) -> str:
    for line in text.splitlines():
        if line.strip() and not line.lstrip().startswith("#"):
            if ";" in line:
                return ";"
    return ","


def _perf_event_name(field: str) -> str:
    # strip privilege-level modifiers such as "instructions:u"
    return field.strip().split(":")[0]


def parse_perf_stat(text: str) -> PerfCtcFeatures:
    """Extract instruction count, cycle count and user time from perf output.

    Accepts the field-separated mode with either ',' or ';' as separator
    (lines ``value<sep>unit<sep>event<sep>...``). Thousands separators inside
    the value field are stripped.
    """
    sep = _perf_separator(text)
    found: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(sep)
        if len(fields) < 3:
            continue
        event = _perf_event_name(fields[2])
        if event in ("instructions", "cycles", "user_time") and event not in found:
            found[event] = fields[0].strip()

    for needed in ("instructions", "cycles", "user_time"):
        if needed not in found:
            raise MissingCounter(f"perf output has no '{needed}' line")

    def as_int(name: str) -> int:
        cleaned = found[name].replace(",", "").replace(" ", "")
        try:
            return int(cleaned)
        except ValueError:
            raise NonNumericValue(f"perf counter '{name}' is not an integer: {found[name]!r}") from None

    def as_seconds(name: str) -> float:
        try:
            return float(found[name].replace(",", ""))
        except ValueError:
            raise NonNumericValue(f"perf value '{name}' is not a number: {found[name]!r}") from None

    return PerfCtcFeatures(
        instructions=as_int("instructions"),
        cycles=as_int("cycles"),
        user_time=as_seconds("user_time"),
    )


def parse_measurement_series(text: str) -> tuple[MeasurementSeries, MeasurementSeries]:
    """Parse a ``label,repeat_index,joules`` CSV into (active, idle) series.

    Rows are ordered by repeat_index within each label.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != ["label", "repeat_index", "joules"]:
        raise SchemaViolation("measurement CSV must have header 'label,repeat_index,joules'")
    rows: dict[SeriesLabel, list[tuple[int, float]]] = {SeriesLabel.ACTIVE: [], SeriesLabel.IDLE: []}
    for i, row in enumerate(reader, start=2):
        try:
            label = SeriesLabel(row["label"].strip())
        except ValueError:
            raise RowParseError(f"row {i}: unknown series label {row['label']!r}") from None
        try:
            index = int(row["repeat_index"])
            joules = float(row["joules"])
        except (TypeError, ValueError):
            raise RowParseError(f"row {i}: repeat_index/joules not numeric") from None
        rows[label].append((index, joules))

    series = []
    for label in (SeriesLabel.ACTIVE, SeriesLabel.IDLE):
        if not rows[label]:
            raise EmptySeries(f"measurement CSV has no '{label.value}' rows")
        ordered = [j for _, j in sorted(rows[label], key=lambda p: p[0])]
        series.append(MeasurementSeries(tuple(ordered), label))
    return series[0], series[1]


def confidence_check(
    series: MeasurementSeries,
    max_deviation: float = 0.02,
    confidence: float = 0.99,
) -> ConfidenceCheckResult:
    """Test whether repeated readings pin the mean down tightly enough.

    The relative halfwidth of the two-sided Student-t confidence interval for
    the mean must stay below max_deviation.
    """
    n = len(series.values)
    if n < 2:
        raise TooFewSamples(f"confidence check needs >= 2 readings, got {n}")
    values = np.asarray(series.values, dtype=float)
    mean = float(values.mean())
    if mean <= 0.0:
        raise ZeroMean("confidence check needs a positive mean")
    s = float(values.std(ddof=1))
    if s == 0.0:
        halfwidth = 0.0
    else:
        quantile = float(stats.t.ppf((1.0 + confidence) / 2.0, n - 1))
        halfwidth = quantile * s / (math.sqrt(n) * mean)
    return ConfidenceCheckResult(
        passed=halfwidth < max_deviation,
        relative_halfwidth=halfwidth,
        mean=mean,
        n=n,
    )


def derive_decoding_energy(
    active: MeasurementSeries,
    idle: MeasurementSeries,
    setup: MeasurementSetup = MeasurementSetup.MSS,
    max_deviation: float = 0.02,
    confidence: float = 0.99,
) -> EnergySample:
    """Net decoding energy: mean of active readings minus mean of idle readings.

    passed_confidence is true only when both series individually pass the
    confidence gate; series too short (or with zero mean) to certify are
    marked failed rather than rejected.
    """
    if active.label is not SeriesLabel.ACTIVE or idle.label is not SeriesLabel.IDLE:
        raise SchemaViolation("series passed in the wrong order: expected (active, idle)")
    mean_active = float(np.mean(active.values))
    mean_idle = float(np.mean(idle.values))
    joules = mean_active - mean_idle
    if joules < 0.0:
        raise NegativeEnergy(
            f"active mean {mean_active} J below idle mean {mean_idle} J; "
            "series look corrupted or swapped"
        )

    passed = True
    for series in (active, idle):
        try:
            result = confidence_check(series, max_deviation=max_deviation, confidence=confidence)
            passed = passed and result.passed
        except (TooFewSamples, ZeroMean):
            passed = False
    return EnergySample(
        joules=joules,
        setup=setup,
        n_repeats=min(len(active.values), len(idle.values)),
        passed_confidence=passed,
    )
