"""Request/response bodies for the HTTP service.

Datasets travel as raw CSV/JSON file text inside DatasetPayload, so clients
stay thin: they ship file contents and write back what the service returns.
"""
from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..crosscodec import DecoderScope
from ..types import (
    ClassLabel,
    Codec,
    Condition,
    DecoderKind,
    EnergyTarget,
    FeatureSetKind,
    MeasurementSetup,
    Regressor,
    SeriesLabel,
)


class ApiModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class DatasetPayload(ApiModel):
    format: Literal["csv", "json"]
    content: str


class HealthResponse(ApiModel):
    status: str
    version: str


class ErrorResponse(ApiModel):
    error: str
    message: str


# --- parsing ------------------------------------------------------------------


class CallgrindRequest(ApiModel):
    text: str


class EventVectorResponse(ApiModel):
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


class PerfRequest(ApiModel):
    text: str


class PerfResponse(ApiModel):
    instructions: int
    cycles: int
    user_time: float


# --- energy measurements --------------------------------------------------------


class ConfidenceRequest(ApiModel):
    values: list[float]
    label: SeriesLabel = SeriesLabel.ACTIVE
    max_deviation: float = 0.02
    confidence: float = 0.99


class ConfidenceResponse(ApiModel):
    passed: bool
    relative_halfwidth: float
    mean: float
    n: int


class DeriveRequest(ApiModel):
    active: list[float]
    idle: list[float]
    setup: MeasurementSetup = MeasurementSetup.MSS
    max_deviation: float = 0.02
    confidence: float = 0.99


class DeriveResponse(ApiModel):
    joules: float
    setup: MeasurementSetup
    n_repeats: int
    passed_confidence: bool


# --- ingest ---------------------------------------------------------------------


class RecordMetadata(ApiModel):
    id: str
    codec: Codec
    decoder_name: str
    decoder_kind: DecoderKind
    sequence: str
    class_label: ClassLabel = Field(alias="class")
    qp: int
    condition: Condition


class IngestRequest(ApiModel):
    metadata: RecordMetadata
    dataset: Optional[DatasetPayload] = None
    callgrind_text: Optional[str] = None
    perf_text: Optional[str] = None
    t_dec_sw: Optional[float] = None
    measurements_sw: Optional[str] = None
    measurements_hw: Optional[str] = None
    max_deviation: float = 0.02
    confidence: float = 0.99


class SeriesSummary(ApiModel):
    target: EnergyTarget
    label: SeriesLabel
    passed: bool
    relative_halfwidth: Optional[float]
    mean: float
    n: int


class IngestResponse(ApiModel):
    dataset: DatasetPayload
    record_id: str
    n_records: int
    confidence: list[SeriesSummary]


# --- synthetic corpus -------------------------------------------------------------


class SynthRequest(ApiModel):
    spec: Optional[dict[str, Any]] = None
    seed: int = 42


class SynthResponse(ApiModel):
    dataset_csv: str
    ground_truth: dict[str, Any]
    n_records: int


# --- training ---------------------------------------------------------------------


class TrainRequest(ApiModel):
    dataset: DatasetPayload
    kind: FeatureSetKind = FeatureSetKind.VALGRIND_13PE
    regressor: Regressor = Regressor.GPR
    target: EnergyTarget = EnergyTarget.ENERGY_HW
    seed: int = 42
    rehwed: bool = False
    codecs: Optional[list[Codec]] = None
    decoder_scope: Optional[DecoderKind] = None
    intercept: Optional[bool] = None
    nonnegative: bool = False
    restarts: int = 5


class TrainResponse(ApiModel):
    model: dict[str, Any]
    n_training_records: int


# --- evaluation ---------------------------------------------------------------------


class EvaluateRequest(ApiModel):
    dataset: DatasetPayload
    kinds: Optional[list[FeatureSetKind]] = None
    regressor: Regressor = Regressor.GPR
    target: EnergyTarget = EnergyTarget.ENERGY_HW
    k: int = 10
    seed: int = 42


class EvaluateGroup(ApiModel):
    decoder_name: str
    decoder_kind: DecoderKind
    reports: dict[str, dict[str, Any]]


class EvaluateResponse(ApiModel):
    groups: list[EvaluateGroup]
    table: str


# --- cross-codec ----------------------------------------------------------------------


class CrossPredictRequest(ApiModel):
    train: DatasetPayload
    verify: DatasetPayload
    phase: Optional[int] = None
    training_codecs: Optional[list[Codec]] = None
    verification_codec: Optional[Codec] = None
    decoder_scope: DecoderScope = DecoderScope.BOTH
    kinds: list[FeatureSetKind] = [FeatureSetKind.VALGRIND_13PE]
    regressor: Regressor = Regressor.GPR
    seed: int = 42


class CrossPredictResponse(ApiModel):
    outcomes: list[dict[str, Any]]
    table: str
    scatter: dict[str, str]


# --- relative hardware energy demand -----------------------------------------------------


class RehwedRequest(ApiModel):
    model: dict[str, Any]
    test: DatasetPayload
    anchor: DatasetPayload
    test_label: str = "test"
    anchor_label: str = "anchor"


class RehwedResponse(ApiModel):
    report: dict[str, Any]
    table: str
