"""Core domain model: profiling feature vectors, energy samples, dataset rows.

All types are immutable after construction and validate their invariants in
``__post_init__``, so a constructed object is always internally consistent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DuplicateId, EmptySeries, SchemaViolation


class Codec(str, Enum):
    AVC = "AVC"
    HEVC = "HEVC"
    VP9 = "VP9"
    AV1 = "AV1"
    VVC = "VVC"
    AVM = "AVM"


class DecoderKind(str, Enum):
    REFERENCE = "reference"
    OPTIMIZED = "optimized"


class ClassLabel(str, Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    B = "B"


class Condition(str, Enum):
    RA = "RA"
    LB = "LB"


class MeasurementSetup(str, Enum):
    MSS = "MSS"  # software setup (on-CPU power meter)
    MSH = "MSH"  # hardware setup (board + external power meter)


class SeriesLabel(str, Enum):
    ACTIVE = "active"
    IDLE = "idle"


class EnergyTarget(str, Enum):
    ENERGY_SW = "energy_sw"
    ENERGY_HW = "energy_hw"


class FeatureSetKind(str, Enum):
    TEMPORAL = "temporal"
    PERF_CTC = "perf_ctc"
    VALGRIND_13PE = "valgrind_13pe"

    @property
    def dimension(self) -> int:
        return _KIND_DIMENSION[self]


class Regressor(str, Enum):
    LR = "lr"
    GPR = "gpr"


_KIND_DIMENSION = {
    FeatureSetKind.TEMPORAL: 1,
    FeatureSetKind.PERF_CTC: 3,
    FeatureSetKind.VALGRIND_13PE: 13,
}

# Canonical flattening order for the 13 processor-event counts. Every module
# that turns the vector into a row uses exactly this order.
PE_FIELD_ORDER = (
    "ir", "dr", "dw",
    "i1mr", "d1mr", "d1mw",
    "ilmr", "dlmr", "dlmw",
    "bc", "bcm", "bi", "bim",
)

# callgrind spelling of each counter, aligned with PE_FIELD_ORDER.
CALLGRIND_EVENT_NAMES = (
    "Ir", "Dr", "Dw",
    "I1mr", "D1mr", "D1mw",
    "ILmr", "DLmr", "DLmw",
    "Bc", "Bcm", "Bi", "Bim",
)

# (miss, feeding access) pairs: a miss count can never exceed the accesses
# of the level that feeds it.
_PE_HIERARCHY = (
    ("i1mr", "ir"),
    ("d1mr", "dr"),
    ("d1mw", "dw"),
    ("ilmr", "i1mr"),
    ("dlmr", "d1mr"),
    ("dlmw", "d1mw"),
    ("bcm", "bc"),
    ("bim", "bi"),
)


@dataclass(frozen=True)
class ProcessorEventVector:
    """Program-total counts of the 13 cache/branch simulation counters."""

    ir: int
    dr: int
    dw: int
    i1mr: int
    d1mr: int
    d1mw: int
    ilmr: int
    dlmr: int
    dlmw: int
    bc: int
    bcm: int
    bi: int
    bim: int

    def __post_init__(self) -> None:
        for name in PE_FIELD_ORDER:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise SchemaViolation(f"event count '{name}' must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
            if value < 0:
                raise SchemaViolation(f"event count '{name}' must be >= 0, got {value}")
        for miss, access in _PE_HIERARCHY:
            if getattr(self, miss) > getattr(self, access):
                raise SchemaViolation(
                    f"miss count '{miss}'={getattr(self, miss)} exceeds "
                    f"'{access}'={getattr(self, access)}"
                )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PE_FIELD_ORDER], dtype=float)

    def as_dict(self) -> dict[str, int]:
        return {n: getattr(self, n) for n in PE_FIELD_ORDER}

    @classmethod
    def from_mapping(cls, counts: dict[str, int]) -> "ProcessorEventVector":
        return cls(**{n: int(counts[n]) for n in PE_FIELD_ORDER})


@dataclass(frozen=True)
class PerfCtcFeatures:
    """The three counters recommended for coding-tool complexity reporting."""

    instructions: int
    cycles: int
    user_time: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "instructions", int(self.instructions))
        object.__setattr__(self, "cycles", int(self.cycles))
        object.__setattr__(self, "user_time", float(self.user_time))
        if self.instructions < 0 or self.cycles < 0:
            raise SchemaViolation("perf counters must be >= 0")
        if not math.isfinite(self.user_time) or self.user_time < 0:
            raise SchemaViolation(f"user_time must be finite and >= 0, got {self.user_time}")

    def as_array(self) -> np.ndarray:
        return np.array([self.instructions, self.cycles, self.user_time], dtype=float)


@dataclass(frozen=True)
class TemporalFeature:
    """Software decoding time in seconds."""

    t_dec_sw: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "t_dec_sw", float(self.t_dec_sw))
        if not math.isfinite(self.t_dec_sw) or self.t_dec_sw < 0:
            raise SchemaViolation(f"t_dec_sw must be finite and >= 0, got {self.t_dec_sw}")

    def as_array(self) -> np.ndarray:
        return np.array([self.t_dec_sw], dtype=float)


@dataclass(frozen=True)
class EnergySample:
    """One aggregated decoding-energy measurement in joules."""

    joules: float
    setup: MeasurementSetup
    n_repeats: int = 1
    passed_confidence: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "joules", float(self.joules))
        object.__setattr__(self, "setup", MeasurementSetup(self.setup))
        object.__setattr__(self, "n_repeats", int(self.n_repeats))
        if not math.isfinite(self.joules) or self.joules < 0:
            raise SchemaViolation(f"energy must be finite and >= 0 J, got {self.joules}")
        if self.n_repeats < 1:
            raise SchemaViolation(f"n_repeats must be >= 1, got {self.n_repeats}")


@dataclass(frozen=True)
class MeasurementSeries:
    """Repeated raw energy readings for one bitstream, active or idle."""

    values: tuple[float, ...]
    label: SeriesLabel

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", SeriesLabel(self.label))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) == 0:
            raise EmptySeries(f"'{self.label.value}' series has no readings")
        for v in self.values:
            if not math.isfinite(v) or v < 0:
                raise SchemaViolation(f"energy reading must be finite and >= 0 J, got {v}")


@dataclass(frozen=True)
class BitstreamRecord:
    """One encoded bitstream with its profiling features and measured energies."""

    id: str
    codec: Codec
    decoder_name: str
    decoder_kind: DecoderKind
    sequence: str
    class_label: ClassLabel
    qp: int
    condition: Condition
    temporal: Optional[TemporalFeature] = None
    perf: Optional[PerfCtcFeatures] = None
    valgrind: Optional[ProcessorEventVector] = None
    energy_sw: Optional[EnergySample] = None
    energy_hw: Optional[EnergySample] = None

    def __post_init__(self) -> None:
        for name, enum_cls in (
            ("codec", Codec), ("decoder_kind", DecoderKind),
            ("class_label", ClassLabel), ("condition", Condition),
        ):
            try:
                object.__setattr__(self, name, enum_cls(getattr(self, name)))
            except ValueError:
                raise SchemaViolation(
                    f"record '{self.id}': bad {name} {getattr(self, name)!r}"
                ) from None
        object.__setattr__(self, "qp", int(self.qp))
        if not self.id:
            raise SchemaViolation("record id must be a nonempty string")
        if self.temporal is None and self.perf is None and self.valgrind is None:
            raise SchemaViolation(f"record '{self.id}' carries no feature set")

    def features_for(self, kind: FeatureSetKind) -> Optional[np.ndarray]:
        holder = {
            FeatureSetKind.TEMPORAL: self.temporal,
            FeatureSetKind.PERF_CTC: self.perf,
            FeatureSetKind.VALGRIND_13PE: self.valgrind,
        }[kind]
        return None if holder is None else holder.as_array()

    def energy_for(self, target: EnergyTarget) -> Optional[float]:
        sample = self.energy_sw if target is EnergyTarget.ENERGY_SW else self.energy_hw
        return None if sample is None else sample.joules


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of bitstream records with unique ids."""

    records: tuple[BitstreamRecord, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateId(f"duplicate record id '{rec.id}'")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    def filter(self, predicate) -> "Dataset":
        return Dataset(tuple(r for r in self.records if predicate(r)), self.provenance)
