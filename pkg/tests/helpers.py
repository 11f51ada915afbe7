"""Builders shared by the test modules."""
from pathlib import Path

from decenergy.types import (
    BitstreamRecord,
    ClassLabel,
    Codec,
    Condition,
    Dataset,
    EnergySample,
    MeasurementSetup,
    ProcessorEventVector,
    TemporalFeature,
)

FIXTURES = Path(__file__).parent / "fixtures"

# satisfies the cache/branch hierarchy and keeps numbers easy to eyeball
PE_BASIC = dict(
    ir=1000, dr=300, dw=200, i1mr=10, d1mr=5, d1mw=4,
    ilmr=2, dlmr=1, dlmw=1, bc=150, bcm=20, bi=30, bim=6,
)


def event_vector(scale: int = 1) -> ProcessorEventVector:
    return ProcessorEventVector(**{k: v * scale for k, v in PE_BASIC.items()})


def make_record(record_id: str, **overrides) -> BitstreamRecord:
    base = dict(
        id=record_id,
        codec=Codec.HEVC,
        decoder_name="hm",
        decoder_kind="reference",
        sequence="Cactus",
        class_label=ClassLabel.B,
        qp=32,
        condition=Condition.RA,
        temporal=TemporalFeature(1.5),
        valgrind=event_vector(),
        energy_hw=EnergySample(2.5, setup=MeasurementSetup.MSH),
    )
    base.update(overrides)
    return BitstreamRecord(**base)


def make_dataset(*records: BitstreamRecord, provenance: str = "unit-test") -> Dataset:
    return Dataset(records=tuple(records), provenance=provenance)


def read_fixture(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")
