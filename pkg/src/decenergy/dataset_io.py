"""Reading and writing bitstream datasets as CSV or JSON.

Both formats share one flat row schema; an empty CSV cell and an omitted JSON
field both mean "absent". Feature groups are all-or-nothing per row: either
every column of a group is filled or none of it is.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Optional, Union

from .errors import RowParseError, SchemaViolation
from .types import (
    PE_FIELD_ORDER,
    BitstreamRecord,
    ClassLabel,
    Codec,
    Condition,
    Dataset,
    DecoderKind,
    EnergySample,
    MeasurementSetup,
    PerfCtcFeatures,
    ProcessorEventVector,
    TemporalFeature,
)

PERF_COLUMNS = ("perf_instructions", "perf_cycles", "perf_user_time")

COLUMNS = (
    "id", "codec", "decoder_name", "decoder_kind", "sequence", "class", "qp",
    "condition", "t_dec_sw",
) + PERF_COLUMNS + PE_FIELD_ORDER + ("energy_sw_j", "energy_hw_j")


def canonical_json_dumps(obj: Any) -> str:
    """Serialize with sorted keys and no environment-dependent content.

    Two calls on equal inputs produce byte-identical text, so outputs can be
    diffed across runs.
    """
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _cell(row: dict[str, Any], name: str) -> Optional[str]:
    value = row.get(name)
    if value is None:
        return None
    text = str(value).strip()
    return text if text else None


def _parse_int(text: str, column: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise RowParseError(f"{where}: column '{column}' is not an integer: {text!r}") from None


def _parse_float(text: str, column: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise RowParseError(f"{where}: column '{column}' is not a number: {text!r}") from None


def _parse_enum(enum_cls, text: str, column: str, where: str):
    try:
        return enum_cls(text)
    except ValueError:
        allowed = ", ".join(m.value for m in enum_cls)
        raise RowParseError(
            f"{where}: column '{column}' has value {text!r}, expected one of: {allowed}"
        ) from None


def _group_cells(row: dict[str, Any], columns: tuple[str, ...], where: str) -> Optional[dict[str, str]]:
    """Return the group's cells if fully present, None if fully absent."""
    cells = {c: _cell(row, c) for c in columns}
    present = [c for c, v in cells.items() if v is not None]
    if not present:
        return None
    if len(present) != len(columns):
        missing = [c for c in columns if cells[c] is None]
        raise RowParseError(f"{where}: feature group partially filled, missing {missing}")
    return {c: v for c, v in cells.items() if v is not None}


def _record_from_row(row: dict[str, Any], where: str) -> BitstreamRecord:
    required = ("id", "codec", "decoder_name", "decoder_kind", "sequence", "class", "qp", "condition")
    for col in required:
        if _cell(row, col) is None:
            raise RowParseError(f"{where}: required column '{col}' is empty")

    temporal = None
    cell = _cell(row, "t_dec_sw")
    if cell is not None:
        temporal = TemporalFeature(_parse_float(cell, "t_dec_sw", where))

    perf = None
    perf_cells = _group_cells(row, PERF_COLUMNS, where)
    if perf_cells is not None:
        perf = PerfCtcFeatures(
            instructions=_parse_int(perf_cells["perf_instructions"], "perf_instructions", where),
            cycles=_parse_int(perf_cells["perf_cycles"], "perf_cycles", where),
            user_time=_parse_float(perf_cells["perf_user_time"], "perf_user_time", where),
        )

    valgrind = None
    pe_cells = _group_cells(row, PE_FIELD_ORDER, where)
    if pe_cells is not None:
        counts = {name: _parse_int(pe_cells[name], name, where) for name in PE_FIELD_ORDER}
        valgrind = ProcessorEventVector.from_mapping(counts)

    energy_sw = None
    cell = _cell(row, "energy_sw_j")
    if cell is not None:
        energy_sw = EnergySample(_parse_float(cell, "energy_sw_j", where), MeasurementSetup.MSS)

    energy_hw = None
    cell = _cell(row, "energy_hw_j")
    if cell is not None:
        energy_hw = EnergySample(_parse_float(cell, "energy_hw_j", where), MeasurementSetup.MSH)

    try:
        return BitstreamRecord(
            id=str(_cell(row, "id")),
            codec=_parse_enum(Codec, _cell(row, "codec"), "codec", where),
            decoder_name=str(_cell(row, "decoder_name")),
            decoder_kind=_parse_enum(DecoderKind, _cell(row, "decoder_kind"), "decoder_kind", where),
            sequence=str(_cell(row, "sequence")),
            class_label=_parse_enum(ClassLabel, _cell(row, "class"), "class", where),
            qp=_parse_int(_cell(row, "qp"), "qp", where),
            condition=_parse_enum(Condition, _cell(row, "condition"), "condition", where),
            temporal=temporal,
            perf=perf,
            valgrind=valgrind,
            energy_sw=energy_sw,
            energy_hw=energy_hw,
        )
    except SchemaViolation as exc:
        raise RowParseError(f"{where}: {exc}") from None


def _row_from_record(rec: BitstreamRecord) -> dict[str, str]:
    row = {c: "" for c in COLUMNS}
    row["id"] = rec.id
    row["codec"] = rec.codec.value
    row["decoder_name"] = rec.decoder_name
    row["decoder_kind"] = rec.decoder_kind.value
    row["sequence"] = rec.sequence
    row["class"] = rec.class_label.value
    row["qp"] = str(rec.qp)
    row["condition"] = rec.condition.value
    if rec.temporal is not None:
        row["t_dec_sw"] = repr(rec.temporal.t_dec_sw)
    if rec.perf is not None:
        row["perf_instructions"] = str(rec.perf.instructions)
        row["perf_cycles"] = str(rec.perf.cycles)
        row["perf_user_time"] = repr(rec.perf.user_time)
    if rec.valgrind is not None:
        for name, value in rec.valgrind.as_dict().items():
            row[name] = str(value)
    if rec.energy_sw is not None:
        row["energy_sw_j"] = repr(rec.energy_sw.joules)
    if rec.energy_hw is not None:
        row["energy_hw_j"] = repr(rec.energy_hw.joules)
    return row


def read_csv(text: str, provenance: str = "") -> Dataset:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise SchemaViolation("CSV input has no header row")
    header = [h.strip() for h in reader.fieldnames]
    if sorted(header) != sorted(COLUMNS):
        missing = set(COLUMNS) - set(header)
        extra = set(header) - set(COLUMNS)
        parts = []
        if missing:
            parts.append(f"missing columns {sorted(missing)}")
        if extra:
            parts.append(f"unknown columns {sorted(extra)}")
        raise SchemaViolation("CSV header mismatch: " + "; ".join(parts))

    records = []
    for i, raw in enumerate(reader, start=2):
        row = {h.strip(): v for h, v in raw.items() if h is not None}
        if None in raw.values() or raw.get(None):
            raise RowParseError(f"row {i}: cell count does not match header")
        records.append(_record_from_row(row, f"row {i}"))
    return Dataset(tuple(records), provenance)


def dumps_csv(dataset: Dataset) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(COLUMNS), lineterminator="\n")
    writer.writeheader()
    for rec in dataset.records:
        writer.writerow(_row_from_record(rec))
    return out.getvalue()


def read_json(text: str, provenance: str = "") -> Dataset:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON dataset: {exc}") from None
    if not isinstance(payload, dict) or "records" not in payload:
        raise SchemaViolation("JSON dataset must be an object with a 'records' array")
    rows = payload["records"]
    if not isinstance(rows, list):
        raise SchemaViolation("'records' must be an array")
    records = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise RowParseError(f"record {i}: expected an object")
        unknown = set(row) - set(COLUMNS)
        if unknown:
            raise RowParseError(f"record {i}: unknown fields {sorted(unknown)}")
        records.append(_record_from_row(row, f"record {i}"))
    return Dataset(tuple(records), str(payload.get("provenance", provenance)))


def dumps_json(dataset: Dataset) -> str:
    rows = []
    for rec in dataset.records:
        row: dict[str, Any] = {"id": rec.id, "codec": rec.codec.value,
                               "decoder_name": rec.decoder_name,
                               "decoder_kind": rec.decoder_kind.value,
                               "sequence": rec.sequence, "class": rec.class_label.value,
                               "qp": rec.qp, "condition": rec.condition.value}
        if rec.temporal is not None:
            row["t_dec_sw"] = rec.temporal.t_dec_sw
        if rec.perf is not None:
            row["perf_instructions"] = rec.perf.instructions
            row["perf_cycles"] = rec.perf.cycles
            row["perf_user_time"] = rec.perf.user_time
        if rec.valgrind is not None:
            row.update(rec.valgrind.as_dict())
        if rec.energy_sw is not None:
            row["energy_sw_j"] = rec.energy_sw.joules
        if rec.energy_hw is not None:
            row["energy_hw_j"] = rec.energy_hw.joules
        rows.append(row)
    return canonical_json_dumps({"provenance": dataset.provenance, "records": rows})


def read_dataset(text: str, fmt: str, provenance: str = "") -> Dataset:
    if fmt == "csv":
        return read_csv(text, provenance)
    if fmt == "json":
        return read_json(text, provenance)
    raise SchemaViolation(f"unknown dataset format {fmt!r}, expected 'csv' or 'json'")


def load_dataset(path: Union[str, Path]) -> Dataset:
    path = Path(path)
    suffix = path.suffix.lower().lstrip(".")
    if suffix not in ("csv", "json"):
        raise SchemaViolation(f"cannot infer dataset format from '{path.name}', use .csv or .json")
    return read_dataset(path.read_text(encoding="utf-8"), suffix, provenance=path.name)


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    path = Path(path)
    suffix = path.suffix.lower().lstrip(".")
    if suffix == "csv":
        path.write_text(dumps_csv(dataset), encoding="utf-8")
    elif suffix == "json":
        path.write_text(dumps_json(dataset), encoding="utf-8")
    else:
        raise SchemaViolation(f"cannot infer dataset format from '{path.name}', use .csv or .json")
