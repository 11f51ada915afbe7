"""Cross-codec prediction: train on measured codecs, predict an unseen one.

A model trained on software-profiling features of codecs with hardware energy
measurements predicts the hardware energy of a verification codec from its
software profiling alone; a first-order calibration (alpha + beta * estimate)
maps the raw predictions onto the verification codec's measurement scale.
The calibration needs the verification measurements, so the uncalibrated
correlation is always reported alongside it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import (
    CodecLeak,
    ConstantPredictions,
    EmptyTrainingSet,
    LengthMismatch,
    SchemaViolation,
    TooFewSamples,
)
from .evaluation import extract_features, mape, pearson
from .regression import fit_regressor, predict_batch
from .types import (
    Codec,
    Dataset,
    DecoderKind,
    EnergyTarget,
    FeatureSetKind,
    Regressor,
)


class DecoderScope(str, Enum):
    REFERENCE = "reference"
    OPTIMIZED = "optimized"
    BOTH = "both"

    def admits(self, kind: DecoderKind) -> bool:
        if self is DecoderScope.BOTH:
            return True
        return kind.value == self.value


# phase_id 0 is reserved for caller-defined codec assignments
CUSTOM_PHASE_ID = 0


@dataclass(frozen=True)
class PhaseConfig:
    """One training/verification codec assignment."""

    phase_id: int
    training_codecs: frozenset[Codec]
    verification_codec: Codec
    decoder_scope: DecoderScope = DecoderScope.BOTH

    def __post_init__(self) -> None:
        object.__setattr__(self, "training_codecs", frozenset(self.training_codecs))
        if not self.training_codecs:
            raise SchemaViolation("a phase needs at least one training codec")
        if not CUSTOM_PHASE_ID <= self.phase_id <= 7:
            raise SchemaViolation(f"phase_id must be 0 (custom) or 1..7, got {self.phase_id}")
        if self.verification_codec in self.training_codecs:
            raise CodecLeak(
                f"verification codec {self.verification_codec.value} is also a training codec"
            )

    def codec_names(self) -> list[str]:
        return sorted(c.value for c in self.training_codecs)


def phase_preset(phase_id: int, decoder_scope: DecoderScope = DecoderScope.BOTH) -> PhaseConfig:
    """The seven built-in phases, all verifying against AV1."""
    training = {
        1: {Codec.AVC},
        2: {Codec.HEVC},
        3: {Codec.VP9},
        4: {Codec.AVC, Codec.HEVC},
        5: {Codec.AVC, Codec.VP9},
        6: {Codec.AVC, Codec.HEVC, Codec.VP9},
        7: {Codec.HEVC, Codec.VP9},
    }
    if phase_id not in training:
        raise SchemaViolation(f"no built-in phase {phase_id}; presets are 1..7")
    return PhaseConfig(
        phase_id=phase_id,
        training_codecs=frozenset(training[phase_id]),
        verification_codec=Codec.AV1,
        decoder_scope=decoder_scope,
    )


@dataclass(frozen=True)
class CalibrationParams:
    """First-order transform onto the verification measurement scale."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise SchemaViolation("calibration parameters must be finite")


def fit_calibration(predicted: np.ndarray, measured: np.ndarray) -> CalibrationParams:
    """Ordinary least squares for measured = alpha + beta * predicted."""
    predicted = np.asarray(predicted, dtype=float)
    measured = np.asarray(measured, dtype=float)
    if predicted.shape != measured.shape or predicted.ndim != 1:
        raise LengthMismatch(
            f"predicted/measured shapes differ: {predicted.shape} vs {measured.shape}"
        )
    if predicted.size < 2:
        raise TooFewSamples(f"calibration needs >= 2 points, got {predicted.size}")
    pc = predicted - predicted.mean()
    spread = float(pc @ pc)
    if spread == 0.0:
        raise ConstantPredictions("predictions are constant; the line is undetermined")
    beta = float(pc @ (measured - measured.mean())) / spread
    alpha = float(measured.mean() - beta * predicted.mean())
    return CalibrationParams(alpha=alpha, beta=beta)


def apply_calibration(params: CalibrationParams, predicted: np.ndarray) -> np.ndarray:
    return params.alpha + params.beta * np.asarray(predicted, dtype=float)


@dataclass(frozen=True, eq=False)
class CrossCodecReport:
    """Raw and calibrated accuracy on one verification decoder group."""

    phase: PhaseConfig
    kind: FeatureSetKind
    regressor: Regressor
    decoder_kind: DecoderKind
    ids: tuple[str, ...]
    raw_predictions: np.ndarray
    calibrated: np.ndarray
    measured: np.ndarray
    pcc_raw: float
    mape_calibrated: float
    calibration: CalibrationParams

    def __post_init__(self) -> None:
        n = len(self.ids)
        shapes = {self.raw_predictions.shape, self.calibrated.shape, self.measured.shape}
        if shapes != {(n,)}:
            raise LengthMismatch("report vectors must all match the id list length")


@dataclass(frozen=True)
class PhaseOutcome:
    """run_phase result: one report per verification decoder group."""

    phase: PhaseConfig
    kind: FeatureSetKind
    regressor: Regressor
    seed: int
    reports: tuple[CrossCodecReport, ...]


def _check_codecs(dataset: Dataset, phase: PhaseConfig, side: str) -> None:
    for rec in dataset.records:
        if side == "train":
            if rec.codec is phase.verification_codec:
                raise CodecLeak(
                    f"training data contains verification codec "
                    f"{rec.codec.value} (record '{rec.id}')"
                )
            if rec.codec not in phase.training_codecs:
                raise SchemaViolation(
                    f"training record '{rec.id}' has codec {rec.codec.value}, "
                    f"outside the phase's training set"
                )
        else:
            if rec.codec in phase.training_codecs:
                raise CodecLeak(
                    f"verification data contains training codec "
                    f"{rec.codec.value} (record '{rec.id}')"
                )
            if rec.codec is not phase.verification_codec:
                raise SchemaViolation(
                    f"verification record '{rec.id}' has codec {rec.codec.value}, "
                    f"expected {phase.verification_codec.value}"
                )


def _scope_filter(dataset: Dataset, scope: DecoderScope) -> Dataset:
    return dataset.filter(lambda r: scope.admits(r.decoder_kind))


def run_phase(
    train: Dataset,
    verify: Dataset,
    phase: PhaseConfig,
    kind: FeatureSetKind,
    regressor: Regressor,
    seed: int = 42,
) -> PhaseOutcome:
    """Train once on the pooled training codecs, verify per decoder group.

    With decoder_scope=both, reference and optimized records train together
    but are scored separately.
    """
    regressor = Regressor(regressor)
    _check_codecs(train, phase, "train")
    _check_codecs(verify, phase, "verify")
    train_scoped = _scope_filter(train, phase.decoder_scope)
    verify_scoped = _scope_filter(verify, phase.decoder_scope)
    if len(train_scoped) == 0:
        raise EmptyTrainingSet(
            f"no training records left for scope '{phase.decoder_scope.value}'"
        )
    if len(verify_scoped) == 0:
        raise EmptyTrainingSet(
            f"no verification records left for scope '{phase.decoder_scope.value}'"
        )

    features, targets, _ = extract_features(train_scoped, kind, EnergyTarget.ENERGY_HW)
    model = fit_regressor(features, targets, regressor, seed=seed)

    groups: list[tuple[DecoderKind, Dataset]] = []
    for decoder_kind in (DecoderKind.REFERENCE, DecoderKind.OPTIMIZED):
        subset = verify_scoped.filter(lambda r, dk=decoder_kind: r.decoder_kind is dk)
        if len(subset):
            groups.append((decoder_kind, subset))

    reports = []
    for decoder_kind, subset in groups:
        v_features, v_targets, v_ids = extract_features(subset, kind, EnergyTarget.ENERGY_HW)
        raw = predict_batch(model, v_features.values)
        calibration = fit_calibration(raw, v_targets)
        calibrated = apply_calibration(calibration, raw)
        reports.append(CrossCodecReport(
            phase=phase,
            kind=kind,
            regressor=regressor,
            decoder_kind=decoder_kind,
            ids=v_ids,
            raw_predictions=raw,
            calibrated=calibrated,
            measured=v_targets,
            pcc_raw=pearson(raw, v_targets),
            mape_calibrated=mape(v_targets, calibrated),
            calibration=calibration,
        ))
    return PhaseOutcome(phase=phase, kind=kind, regressor=regressor, seed=seed,
                        reports=tuple(reports))


def report_to_dict(report: CrossCodecReport) -> dict[str, Any]:
    return {
        "phase_id": report.phase.phase_id,
        "training_codecs": report.phase.codec_names(),
        "verification_codec": report.phase.verification_codec.value,
        "decoder_scope": report.phase.decoder_scope.value,
        "kind": report.kind.value,
        "regressor": report.regressor.value,
        "decoder_kind": report.decoder_kind.value,
        "ids": list(report.ids),
        "raw_predictions_j": report.raw_predictions.tolist(),
        "calibrated_j": report.calibrated.tolist(),
        "measured_j": report.measured.tolist(),
        "pcc_raw": report.pcc_raw,
        "mape_calibrated": report.mape_calibrated,
        "calibration": {"alpha": report.calibration.alpha, "beta": report.calibration.beta},
    }


def outcome_to_dict(outcome: PhaseOutcome) -> dict[str, Any]:
    return {
        "phase_id": outcome.phase.phase_id,
        "training_codecs": outcome.phase.codec_names(),
        "verification_codec": outcome.phase.verification_codec.value,
        "decoder_scope": outcome.phase.decoder_scope.value,
        "kind": outcome.kind.value,
        "regressor": outcome.regressor.value,
        "seed": outcome.seed,
        "reports": [report_to_dict(r) for r in outcome.reports],
    }


def format_phase_table(outcomes: list[PhaseOutcome]) -> str:
    """Rows = phase x decoder group; calibrated MAPE per feature-set column."""
    from .evaluation import KIND_TITLES, percent, render_table

    kinds = []
    for outcome in outcomes:
        if outcome.kind not in kinds:
            kinds.append(outcome.kind)
    cells: dict[tuple[int, DecoderKind], dict[FeatureSetKind, CrossCodecReport]] = {}
    labels: dict[tuple[int, DecoderKind], str] = {}
    for outcome in outcomes:
        for report in outcome.reports:
            key = (outcome.phase.phase_id, report.decoder_kind)
            cells.setdefault(key, {})[outcome.kind] = report
            kind_title = "Ref." if report.decoder_kind is DecoderKind.REFERENCE else "Opt."
            labels[key] = (
                f"phase {outcome.phase.phase_id} "
                f"{outcome.phase.verification_codec.value} {kind_title}"
            )
    headers = ["phase"] + [KIND_TITLES[k] + " MAPE" for k in kinds] + ["PCC (raw)"]
    body = []
    for key in sorted(cells, key=lambda k: (k[0], k[1].value)):
        row = [labels[key]]
        for kind in kinds:
            report = cells[key].get(kind)
            row.append(percent(report.mape_calibrated) if report is not None else "--")
        pccs = [f"{cells[key][k].pcc_raw:.4f}" for k in kinds if k in cells[key]]
        row.append("/".join(pccs))
        body.append(row)
    return render_table(headers, body)


def scatter_csv(report: CrossCodecReport) -> str:
    """Per-bitstream (measured, raw, calibrated) triples for external plotting."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "e_veri_j", "e_cross_j", "e_veri_cal_j"])
    for rec_id, measured, raw, cal in zip(
        report.ids, report.measured, report.raw_predictions, report.calibrated
    ):
        writer.writerow([rec_id, repr(float(measured)), repr(float(raw)), repr(float(cal))])
    return out.getvalue()
