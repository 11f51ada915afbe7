"""Accuracy metrics and the seeded k-fold cross-validation harness."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np

from .errors import (
    ConstantInput,
    DecenergyError,
    LengthMismatch,
    MissingFeature,
    TooFewSamples,
    ZeroMeasurement,
)
from .regression import FeatureMatrix, fit_regressor, predict_batch
from .types import Dataset, EnergyTarget, FeatureSetKind, Regressor


def mape(measured: np.ndarray, estimated: np.ndarray) -> float:
    """Mean absolute percentage error, as a fraction of the measured value."""
    measured = np.asarray(measured, dtype=float)
    estimated = np.asarray(estimated, dtype=float)
    if measured.shape != estimated.shape or measured.ndim != 1 or measured.size < 1:
        raise LengthMismatch(
            f"need two equal-length vectors, got shapes {measured.shape} and {estimated.shape}"
        )
    if np.any(measured <= 0):
        raise ZeroMeasurement("measured energies must be > 0 to form percentage errors")
    return float(np.mean(np.abs(measured - estimated) / measured))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise LengthMismatch(
            f"need two equal-length vectors of >= 2 values, got shapes {x.shape} and {y.shape}"
        )
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(xc @ xc))
    sy = float(np.sqrt(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ConstantInput("correlation is undefined for a constant vector")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def kfold_split(dataset: Union[Dataset, int], k: int = 10, seed: int = 42) -> list[tuple[int, ...]]:
    """Partition record indices into k seeded, shuffled folds.

    Fold sizes differ by at most one; indices inside a fold are sorted so
    downstream accumulation order is deterministic.
    """
    n = dataset if isinstance(dataset, int) else len(dataset)
    if k < 2:
        raise TooFewSamples(f"k must be >= 2, got {k}")
    if n < k:
        raise TooFewSamples(f"cannot split {n} records into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    base, remainder = divmod(n, k)
    folds: list[tuple[int, ...]] = []
    start = 0
    for fold_index in range(k):
        size = base + (1 if fold_index < remainder else 0)
        folds.append(tuple(sorted(int(i) for i in order[start:start + size])))
        start += size
    return folds


def extract_features(
    dataset: Dataset,
    kind: FeatureSetKind,
    target: Optional[EnergyTarget] = None,
) -> tuple[FeatureMatrix, Optional[np.ndarray], tuple[str, ...]]:
    """Pull the feature block (and optionally the energy target) off a dataset.

    Records lacking the requested fields fail as a group with their ids.
    """
    missing = [
        r.id for r in dataset.records
        if r.features_for(kind) is None
        or (target is not None and r.energy_for(target) is None)
    ]
    if missing:
        raise MissingFeature(
            f"records lack {kind.value} features"
            + (f" or {target.value}" if target is not None else "")
            + f": {missing}"
        )
    rows = np.vstack([r.features_for(kind) for r in dataset.records])
    matrix = FeatureMatrix(rows, kind)
    targets = None
    if target is not None:
        targets = np.array([r.energy_for(target) for r in dataset.records], dtype=float)
    return matrix, targets, dataset.ids()


@dataclass(frozen=True)
class FoldResult:
    fold_index: int
    mape: float
    n_samples: int


@dataclass(frozen=True)
class EvaluationReport:
    """Out-of-fold accuracy of one regressor on one feature set."""

    mape: float
    pcc: float
    per_fold: tuple[FoldResult, ...]
    regressor: Regressor
    kind: FeatureSetKind
    target: EnergyTarget
    seed: int
    k: int


def cross_validate(
    dataset: Dataset,
    kind: FeatureSetKind,
    regressor: Regressor,
    target: EnergyTarget = EnergyTarget.ENERGY_HW,
    k: int = 10,
    seed: int = 42,
) -> EvaluationReport:
    """Seeded k-fold cross-validation; MAPE/PCC over pooled out-of-fold predictions."""
    regressor = Regressor(regressor)
    features, targets, _ = extract_features(dataset, kind, target)
    folds = kfold_split(len(dataset), k=k, seed=seed)
    predictions = np.empty(len(dataset))
    per_fold: list[FoldResult] = []
    for fold_index, fold in enumerate(folds):
        train_idx = sorted(set(range(len(dataset))) - set(fold))
        try:
            model = fit_regressor(
                FeatureMatrix(features.values[train_idx], kind),
                targets[train_idx],
                regressor,
                seed=seed,
            )
            fold_pred = predict_batch(model, features.values[list(fold)])
            fold_mape = mape(targets[list(fold)], fold_pred)
        except DecenergyError as exc:
            raise type(exc)(f"fold {fold_index}: {exc}") from exc
        predictions[list(fold)] = fold_pred
        per_fold.append(FoldResult(fold_index, fold_mape, len(fold)))
    return EvaluationReport(
        mape=mape(targets, predictions),
        pcc=pearson(predictions, targets),
        per_fold=tuple(per_fold),
        regressor=regressor,
        kind=kind,
        target=target,
        seed=seed,
        k=k,
    )


def report_to_dict(report: EvaluationReport) -> dict[str, Any]:
    return {
        "mape": report.mape,
        "pcc": report.pcc,
        "per_fold": [
            {"fold_index": f.fold_index, "mape": f.mape, "n_samples": f.n_samples}
            for f in report.per_fold
        ],
        "regressor": report.regressor.value,
        "kind": report.kind.value,
        "target": report.target.value,
        "seed": report.seed,
        "k": report.k,
    }


def render_table(headers: list[str], rows: list[list[str]]) -> str:
    """Fixed-width text table: first column left-aligned, the rest right-aligned."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def fmt(cells: list[str]) -> str:
        parts = [cells[0].ljust(widths[0])]
        parts += [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join(parts).rstrip()

    ruler = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(headers), ruler] + [fmt(r) for r in rows]) + "\n"


def percent(value: float) -> str:
    return f"{100.0 * value:.2f}%"


KIND_TITLES = {
    FeatureSetKind.TEMPORAL: "Temporal",
    FeatureSetKind.PERF_CTC: "Perf CTC",
    FeatureSetKind.VALGRIND_13PE: "Valgrind 13PE",
}


def format_evaluation_table(
    rows: list[tuple[str, dict[FeatureSetKind, EvaluationReport]]],
    kinds: list[FeatureSetKind],
) -> str:
    """One row per decoder, one MAPE column per feature set."""
    headers = ["decoder"] + [KIND_TITLES[k] for k in kinds]
    body = []
    for label, reports in rows:
        cells = [label]
        for kind in kinds:
            report = reports.get(kind)
            cells.append(percent(report.mape) if report is not None else "--")
        body.append(cells)
    return render_table(headers, body)
