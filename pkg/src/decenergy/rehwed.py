"""Relative expected hardware energy demand between two software decoders.

A pretrained hardware-energy model scores the profiling features of a test
decoder and an anchor decoder over the same bitstream set; the metric is the
mean of the per-bitstream prediction ratios (not the ratio of the means).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

from .dataset_io import canonical_json_dumps
from .errors import (
    EmptyTrainingSet,
    IdMismatch,
    NonPositiveAnchorPrediction,
    SchemaViolation,
)
from .evaluation import extract_features
from .regression import GprModel, fit_gpr, model_from_dict, model_to_dict, predict_gpr_batch
from .types import Codec, Dataset, DecoderKind, EnergyTarget, FeatureSetKind

DEFAULT_REHWED_CODECS = (Codec.HEVC, Codec.VP9, Codec.AV1)

FeatureRows = Mapping[str, np.ndarray]


@dataclass(frozen=True)
class RehwedModel:
    """Pretrained GP hardware-energy model plus its training provenance."""

    model: GprModel
    training_codecs: tuple[Codec, ...]
    decoder_scope: DecoderKind
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            **model_to_dict(self.model),
            "purpose": "rehwed",
            "training_codecs": [c.value for c in self.training_codecs],
            "decoder_scope": self.decoder_scope.value,
            "seed": self.seed,
        }


def rehwed_model_from_dict(payload: dict[str, Any]) -> RehwedModel:
    try:
        if payload.get("purpose") != "rehwed":
            raise SchemaViolation("model file is not a pretrained hardware-energy model")
        codecs = tuple(Codec(c) for c in payload["training_codecs"])
        scope = DecoderKind(payload["decoder_scope"])
        seed = int(payload["seed"])
    except KeyError as exc:
        raise SchemaViolation(f"model JSON is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"model JSON is malformed: {exc}") from None
    core = {k: v for k, v in payload.items()
            if k not in ("purpose", "training_codecs", "decoder_scope", "seed")}
    model = model_from_dict(core)
    if not isinstance(model, GprModel):
        raise SchemaViolation("pretrained model must be a GP model")
    return RehwedModel(model=model, training_codecs=codecs, decoder_scope=scope, seed=seed)


def dumps_rehwed_model(model: RehwedModel) -> str:
    return canonical_json_dumps(model.to_dict())


def loads_rehwed_model(text: str) -> RehwedModel:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid model JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise SchemaViolation("model JSON must be an object")
    return rehwed_model_from_dict(payload)


def save_rehwed_model(model: RehwedModel, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_rehwed_model(model), encoding="utf-8")


def load_rehwed_model(path: Union[str, Path]) -> RehwedModel:
    return loads_rehwed_model(Path(path).read_text(encoding="utf-8"))


def train_rehwed_model(
    train: Dataset,
    kind: FeatureSetKind = FeatureSetKind.VALGRIND_13PE,
    seed: int = 42,
    codecs: tuple[Codec, ...] = DEFAULT_REHWED_CODECS,
    decoder_scope: DecoderKind = DecoderKind.OPTIMIZED,
    restarts: int = 5,
) -> RehwedModel:
    """Fit the pretrained GP on pooled hardware measurements of the codec set."""
    codec_set = set(codecs)
    subset = train.filter(
        lambda r: r.codec in codec_set
        and r.decoder_kind is decoder_scope
        and r.features_for(kind) is not None
        and r.energy_hw is not None
    )
    if len(subset) == 0:
        raise EmptyTrainingSet(
            f"no records with {kind.value} features and hardware energy for codecs "
            f"{sorted(c.value for c in codec_set)} ({decoder_scope.value} decoders)"
        )
    features, targets, _ = extract_features(subset, kind, EnergyTarget.ENERGY_HW)
    gpr = fit_gpr(features, targets, restarts=restarts, seed=seed)
    return RehwedModel(
        model=gpr,
        training_codecs=tuple(sorted(codec_set, key=lambda c: c.value)),
        decoder_scope=decoder_scope,
        seed=seed,
    )


@dataclass(frozen=True)
class BitstreamRatio:
    id: str
    test_estimate_j: float
    anchor_estimate_j: float
    ratio: float


@dataclass(frozen=True)
class RehwedReport:
    """Per-bitstream prediction ratios and their mean."""

    anchor_label: str
    test_label: str
    per_bitstream: tuple[BitstreamRatio, ...]
    rehwed: float
    n: int
    rswdt: Optional[float] = None
    rswed: Optional[float] = None


def profiles_from_dataset(dataset: Dataset, kind: FeatureSetKind) -> dict[str, np.ndarray]:
    """id -> feature row mapping for one profiling run."""
    features, _, ids = extract_features(dataset, kind)
    return {rec_id: features.values[i] for i, rec_id in enumerate(ids)}


def _aligned_ids(test: FeatureRows, anchor: FeatureRows) -> list[str]:
    test_ids = set(test)
    anchor_ids = set(anchor)
    if test_ids != anchor_ids:
        only_test = sorted(test_ids - anchor_ids)
        only_anchor = sorted(anchor_ids - test_ids)
        parts = []
        if only_test:
            parts.append(f"only in test: {only_test}")
        if only_anchor:
            parts.append(f"only in anchor: {only_anchor}")
        raise IdMismatch("test/anchor bitstream sets differ; " + "; ".join(parts))
    if not test_ids:
        raise IdMismatch("test/anchor profile sets are empty")
    return sorted(test_ids)


def compute_rehwed(
    model: Union[RehwedModel, GprModel],
    test_features: FeatureRows,
    anchor_features: FeatureRows,
    test_label: str = "test",
    anchor_label: str = "anchor",
) -> RehwedReport:
    """Mean per-bitstream ratio of predicted test to anchor hardware energy."""
    gpr = model.model if isinstance(model, RehwedModel) else model
    ids = _aligned_ids(test_features, anchor_features)
    test_block = np.vstack([np.asarray(test_features[i], dtype=float) for i in ids])
    anchor_block = np.vstack([np.asarray(anchor_features[i], dtype=float) for i in ids])
    test_pred, _ = predict_gpr_batch(gpr, test_block)
    anchor_pred, _ = predict_gpr_batch(gpr, anchor_block)

    ratios = []
    for rec_id, test_e, anchor_e in zip(ids, test_pred, anchor_pred):
        if anchor_e <= 0.0:
            raise NonPositiveAnchorPrediction(
                f"anchor prediction for bitstream '{rec_id}' is {anchor_e} J; "
                "the ratio is undefined (model extrapolation pathology)"
            )
        ratios.append(BitstreamRatio(rec_id, float(test_e), float(anchor_e),
                                     float(test_e / anchor_e)))
    mean_ratio = float(np.mean([r.ratio for r in ratios]))
    return RehwedReport(
        anchor_label=anchor_label,
        test_label=test_label,
        per_bitstream=tuple(ratios),
        rehwed=mean_ratio,
        n=len(ratios),
    )


def relative_ratio_metric(test: Mapping[str, float], anchor: Mapping[str, float]) -> float:
    """Mean per-bitstream ratio of two scalar observations (time or energy).

    Used for the companion pass-through columns when temporal features or
    software energies are present; involves no modeling.
    """
    ids = _aligned_ids({k: np.empty(0) for k in test}, {k: np.empty(0) for k in anchor})
    ratios = []
    for rec_id in ids:
        denominator = float(anchor[rec_id])
        if denominator <= 0.0:
            raise NonPositiveAnchorPrediction(
                f"anchor value for bitstream '{rec_id}' is {denominator}; ratio undefined"
            )
        ratios.append(float(test[rec_id]) / denominator)
    return float(np.mean(ratios))


def with_passthrough(report: RehwedReport, rswdt: Optional[float], rswed: Optional[float]) -> RehwedReport:
    return RehwedReport(
        anchor_label=report.anchor_label,
        test_label=report.test_label,
        per_bitstream=report.per_bitstream,
        rehwed=report.rehwed,
        n=report.n,
        rswdt=rswdt,
        rswed=rswed,
    )


def format_rehwed_table(reports: list[RehwedReport]) -> str:
    """Anchor/test rows with percentage columns, companion columns if present."""
    from .evaluation import percent, render_table

    with_rswdt = any(r.rswdt is not None for r in reports)
    with_rswed = any(r.rswed is not None for r in reports)
    headers = ["anchor", "test", "REHWED"]
    if with_rswdt:
        headers.append("RSWDT")
    if with_rswed:
        headers.append("RSWED")
    body = []
    for report in reports:
        row = [report.anchor_label, report.test_label, percent(report.rehwed)]
        if with_rswdt:
            row.append(percent(report.rswdt) if report.rswdt is not None else "--")
        if with_rswed:
            row.append(percent(report.rswed) if report.rswed is not None else "--")
        body.append(row)
    return render_table(headers, body)


def rehwed_report_to_dict(report: RehwedReport) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "anchor_label": report.anchor_label,
        "test_label": report.test_label,
        "per_bitstream": [
            {
                "id": r.id,
                "test_estimate_j": r.test_estimate_j,
                "anchor_estimate_j": r.anchor_estimate_j,
                "ratio": r.ratio,
            }
            for r in report.per_bitstream
        ],
        "rehwed": report.rehwed,
        "n": report.n,
    }
    if report.rswdt is not None:
        payload["rswdt"] = report.rswdt
    if report.rswed is not None:
        payload["rswed"] = report.rswed
    return payload
