"""Energy regressors: least-squares linear model and Gaussian process model.

Both regressors map a profiling feature vector to decoding energy in joules.
The GP uses an exponential kernel over z-scored features plus an explicit
linear basis, with hyperparameters trained by maximizing the log marginal
likelihood of the basis residual.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .dataset_io import canonical_json_dumps
from .errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    OptimizationDiverged,
    RankDeficient,
    SchemaViolation,
)
from .types import FeatureSetKind, Regressor

MODEL_FORMAT_VERSION = 1

# log-space search box half-width around the initial hyperparameters
_LOG_BOX = 40.0
_NM_MAXITER = 500
_NM_TOL = 1e-8
_JITTER_SCALE = 1e-10
_JITTER_DOUBLINGS = 6


@dataclass(frozen=True, eq=False)
class Normalization:
    """Per-column affine transform x -> (x - mean) / scale."""

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=float)
        scales = np.asarray(self.scales, dtype=float)
        if means.shape != scales.shape or means.ndim != 1:
            raise DimensionMismatch("normalization means/scales must be matching 1-d vectors")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(scales)):
            raise SchemaViolation("normalization entries must be finite")
        if np.any(scales <= 0):
            raise SchemaViolation("normalization scales must be > 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.means) / self.scales


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """M x N matrix of feature rows for one feature-set kind."""

    values: np.ndarray
    kind: FeatureSetKind
    normalization: Optional[Normalization] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionMismatch(f"feature matrix must be 2-d, got shape {values.shape}")
        if values.shape[0] < 1:
            raise DimensionMismatch("feature matrix needs at least one row")
        if values.shape[1] != self.kind.dimension:
            raise DimensionMismatch(
                f"{self.kind.value} features have dimension {self.kind.dimension}, "
                f"got {values.shape[1]} columns"
            )
        if not np.all(np.isfinite(values)):
            raise SchemaViolation("feature matrix entries must be finite")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _column_stats(values: np.ndarray, center: bool) -> tuple[np.ndarray, np.ndarray]:
    rows = values.shape[0]
    means = values.mean(axis=0) if center else np.zeros(values.shape[1])
    if rows < 2:
        scales = np.ones(values.shape[1])
    else:
        scales = values.std(axis=0, ddof=1)
        scales = np.where((scales > 0) & np.isfinite(scales), scales, 1.0)
    return means, scales


def standardize(features: FeatureMatrix) -> FeatureMatrix:
    """z-score every column; constant columns keep scale 1."""
    means, scales = _column_stats(features.values, center=True)
    norm = Normalization(means, scales)
    return FeatureMatrix(norm.apply(features.values), features.kind, norm)


# --- linear regression -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Linear energy model in raw feature units (joules per count/second)."""

    kind: FeatureSetKind
    coefficients: np.ndarray
    intercept: Optional[float]
    normalization: Normalization

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.shape != (self.kind.dimension,):
            raise DimensionMismatch(
                f"{self.kind.value} model needs {self.kind.dimension} coefficients, "
                f"got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coefficients", coeffs)


def default_intercept(kind: FeatureSetKind) -> bool:
    """Temporal carries a constant offset term; the count models do not."""
    return kind is FeatureSetKind.TEMPORAL


def fit_linear(
    features: FeatureMatrix,
    targets: np.ndarray,
    intercept: Optional[bool] = None,
    nonnegative: bool = False,
) -> LinearModel:
    """Least-squares fit of energy against the feature columns.

    Columns are rescaled internally for conditioning and the solution is
    mapped back to raw feature units. With nonnegative=True the feature
    coefficients are constrained to be >= 0 via bounded least squares.
    """
    if intercept is None:
        intercept = default_intercept(features.kind)
    y = np.asarray(targets, dtype=float)
    if y.shape != (features.rows,):
        raise DimensionMismatch(
            f"targets length {y.shape} does not match {features.rows} feature rows"
        )
    n_params = features.cols + (1 if intercept else 0)
    if features.rows < n_params:
        raise DimensionMismatch(
            f"{features.rows} rows cannot determine {n_params} parameters"
        )

    # center only when an intercept exists to absorb it: a no-intercept model
    # must stay a pure linear map in raw space
    means, scales = _column_stats(features.values, center=intercept)
    norm = Normalization(means, scales)
    design = norm.apply(features.values)
    if intercept:
        design = np.hstack([np.ones((features.rows, 1)), design])

    singular_values = np.linalg.svd(design, compute_uv=False)
    if singular_values[0] == 0 or singular_values[-1] < 1e-10 * singular_values[0]:
        raise RankDeficient(
            "design matrix is singular beyond tolerance 1e-10; "
            "features look duplicated or constant"
        )

    if nonnegative:
        lower = np.full(design.shape[1], 0.0)
        upper = np.full(design.shape[1], np.inf)
        if intercept:
            lower[0] = -np.inf
        solution = optimize.lsq_linear(design, y, bounds=(lower, upper), method="trf").x
    else:
        gram = design.T @ design
        try:
            factor = sla.cho_factor(gram, check_finite=False)
            solution = sla.cho_solve(factor, design.T @ y, check_finite=False)
        except np.linalg.LinAlgError:
            solution, *_ = sla.lstsq(design, y, lapack_driver="gelsy")

    if intercept:
        scaled_intercept, scaled_coeffs = solution[0], solution[1:]
    else:
        scaled_intercept, scaled_coeffs = None, solution
    raw_coeffs = scaled_coeffs / norm.scales
    raw_intercept = None
    if intercept:
        raw_intercept = float(scaled_intercept - raw_coeffs @ norm.means)
    return LinearModel(features.kind, raw_coeffs, raw_intercept, norm)


def predict_linear(model: LinearModel, row: np.ndarray) -> float:
    row = np.asarray(row, dtype=float)
    if row.shape != (model.kind.dimension,):
        raise DimensionMismatch(
            f"expected a length-{model.kind.dimension} feature row, got shape {row.shape}"
        )
    return float(row @ model.coefficients + (model.intercept or 0.0))


def predict_linear_batch(model: LinearModel, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != model.kind.dimension:
        raise DimensionMismatch(f"expected M x {model.kind.dimension} features")
    return values @ model.coefficients + (model.intercept or 0.0)


# --- Gaussian process regression ---------------------------------------------


@dataclass(frozen=True)
class GprHyperparams:
    """Exponential-kernel hyperparameters.

    signal_variance may be exactly 0, which degenerates the GP to its linear
    basis (useful as a consistency check against the linear regressor).
    """

    length_scale: float
    signal_variance: float
    noise_variance: float

    def __post_init__(self) -> None:
        for name, value in (("length_scale", self.length_scale),
                            ("signal_variance", self.signal_variance),
                            ("noise_variance", self.noise_variance)):
            if not math.isfinite(value):
                raise SchemaViolation(f"{name} must be finite, got {value}")
        if self.length_scale <= 0:
            raise SchemaViolation(f"length_scale must be > 0, got {self.length_scale}")
        if self.signal_variance < 0 or self.noise_variance < 0:
            raise SchemaViolation("variances must be >= 0")


def kernel_exponential(
    xs: np.ndarray,
    xt: np.ndarray,
    hyper: GprHyperparams,
    same_index: bool = False,
) -> float:
    """sigma_f^2 * exp(-||xs - xt|| / l), plus sigma_n^2 when xs and xt are
    the same training sample."""
    xs = np.asarray(xs, dtype=float)
    xt = np.asarray(xt, dtype=float)
    if xs.shape != xt.shape:
        raise DimensionMismatch(f"kernel inputs differ in shape: {xs.shape} vs {xt.shape}")
    distance = float(np.linalg.norm(xs - xt))
    value = hyper.signal_variance * math.exp(-distance / hyper.length_scale)
    if same_index:
        value += hyper.noise_variance
    return value


def _pairwise_distances(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(left**2, axis=1)[:, None]
        + np.sum(right**2, axis=1)[None, :]
        - 2.0 * (left @ right.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def _symmetric_distances(points: np.ndarray) -> np.ndarray:
    d = _pairwise_distances(points, points)
    # mirror the upper triangle so K(i, j) == K(j, i) bit for bit
    upper = np.triu(d, k=1)
    return upper + upper.T


def _kernel_matrix(distances: np.ndarray, hyper: GprHyperparams, noisy: bool) -> np.ndarray:
    k = hyper.signal_variance * np.exp(-distances / hyper.length_scale)
    if noisy:
        k = k + hyper.noise_variance * np.eye(distances.shape[0])
    return k


def _cholesky_with_jitter(matrix: np.ndarray) -> np.ndarray:
    m = matrix.shape[0]
    jitter = _JITTER_SCALE * float(np.trace(matrix)) / m
    for _ in range(1 + _JITTER_DOUBLINGS):
        try:
            return sla.cholesky(
                matrix + jitter * np.eye(m), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError:
            if jitter <= 0:
                break
            jitter *= 2.0
    raise NotPositiveDefinite(
        "kernel matrix is not positive definite even after jitter; "
        "hyperparameters look degenerate"
    )


def _gls_basis_fit(white_basis: np.ndarray, white_targets: np.ndarray) -> np.ndarray:
    if white_basis.shape[1] == 0:
        return np.zeros(0)
    gamma, *_ = sla.lstsq(white_basis, white_targets, lapack_driver="gelsy")
    return gamma


def log_marginal_likelihood(
    hyper: GprHyperparams,
    features: FeatureMatrix,
    targets: np.ndarray,
    basis: np.ndarray,
) -> float:
    """Gaussian log likelihood of the basis residual under the kernel.

    The basis coefficients are profiled out at their generalized-least-squares
    optimum for the given hyperparameters.
    """
    y = np.asarray(targets, dtype=float)
    if y.shape != (features.rows,):
        raise DimensionMismatch("targets length does not match feature rows")
    basis = np.asarray(basis, dtype=float)
    if basis.shape[0] != features.rows:
        raise DimensionMismatch("basis rows do not match feature rows")
    distances = _symmetric_distances(features.values)
    cov = _kernel_matrix(distances, hyper, noisy=True)
    chol = _cholesky_with_jitter(cov)
    white_y = sla.solve_triangular(chol, y, lower=True, check_finite=False)
    white_h = sla.solve_triangular(chol, basis, lower=True, check_finite=False)
    gamma = _gls_basis_fit(white_h, white_y)
    residual = white_y - white_h @ gamma
    log_det_half = float(np.sum(np.log(np.diag(chol))))
    m = features.rows
    return float(-0.5 * residual @ residual - log_det_half - 0.5 * m * math.log(2.0 * math.pi))


@dataclass(frozen=True, eq=False)
class GprModel:
    """Trained GP: explicit linear basis plus exponential-kernel residual."""

    kind: FeatureSetKind
    hyper: GprHyperparams
    basis_coefficients: np.ndarray
    training_inputs: FeatureMatrix
    dual_weights: np.ndarray
    normalization: Normalization

    def __post_init__(self) -> None:
        gamma = np.asarray(self.basis_coefficients, dtype=float)
        dual = np.asarray(self.dual_weights, dtype=float)
        if gamma.shape != (self.kind.dimension + 1,):
            raise DimensionMismatch(
                f"basis coefficients must have length {self.kind.dimension + 1}"
            )
        if dual.shape != (self.training_inputs.rows,):
            raise DimensionMismatch("dual weights length must equal training rows")
        object.__setattr__(self, "basis_coefficients", gamma)
        object.__setattr__(self, "dual_weights", dual)

    @cached_property
    def _posterior_factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(chol(K_y), whitened basis, gram of whitened basis) for variances."""
        distances = _symmetric_distances(self.training_inputs.values)
        cov = _kernel_matrix(distances, self.hyper, noisy=True)
        chol = _cholesky_with_jitter(cov)
        basis = _basis_matrix(self.training_inputs.values)
        white_h = sla.solve_triangular(chol, basis, lower=True, check_finite=False)
        return chol, white_h, white_h.T @ white_h


def _basis_matrix(values: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((values.shape[0], 1)), values])


def fit_gpr(
    features: FeatureMatrix,
    targets: np.ndarray,
    restarts: int = 5,
    seed: int = 0,
    hyper: Optional[GprHyperparams] = None,
) -> GprModel:
    """Standardize features, train kernel hyperparameters, solve the basis
    coefficients and dual weights.

    Passing explicit hyperparameters skips the marginal-likelihood search and
    only solves the linear systems.
    """
    y = np.asarray(targets, dtype=float)
    if y.shape != (features.rows,):
        raise DimensionMismatch("targets length does not match feature rows")
    if features.rows < 3:
        raise DimensionMismatch(f"GPR needs at least 3 training rows, got {features.rows}")
    standardized = standardize(features)
    values = standardized.values
    basis = _basis_matrix(values)
    distances = _symmetric_distances(values)

    if hyper is None:
        hyper = _optimize_hyper(distances, basis, y, restarts, seed, values.shape[0])

    cov = _kernel_matrix(distances, hyper, noisy=True)
    chol = _cholesky_with_jitter(cov)
    white_y = sla.solve_triangular(chol, y, lower=True, check_finite=False)
    white_h = sla.solve_triangular(chol, basis, lower=True, check_finite=False)
    gamma = _gls_basis_fit(white_h, white_y)
    residual = y - basis @ gamma
    half = sla.solve_triangular(chol, residual, lower=True, check_finite=False)
    dual = sla.solve_triangular(chol.T, half, lower=False, check_finite=False)

    return GprModel(
        kind=features.kind,
        hyper=hyper,
        basis_coefficients=gamma,
        training_inputs=standardized,
        dual_weights=dual,
        normalization=standardized.normalization,
    )


def _optimize_hyper(
    distances: np.ndarray,
    basis: np.ndarray,
    targets: np.ndarray,
    restarts: int,
    seed: int,
    rows: int,
) -> GprHyperparams:
    if restarts < 1:
        raise SchemaViolation(f"restarts must be >= 1, got {restarts}")
    theta0 = _initial_hyper(distances, basis, targets)

    def negative_lml(theta: np.ndarray) -> float:
        clipped = np.clip(theta, theta0 - _LOG_BOX, theta0 + _LOG_BOX)
        penalty = float(np.sum(np.square(theta - clipped)))
        length, signal, noise = np.exp(clipped)
        try:
            cov = _kernel_matrix(
                distances,
                GprHyperparams(length, signal, noise),
                noisy=True,
            )
            chol = _cholesky_with_jitter(cov)
        except NotPositiveDefinite:
            return 1e12
        white_y = sla.solve_triangular(chol, targets, lower=True, check_finite=False)
        white_h = sla.solve_triangular(chol, basis, lower=True, check_finite=False)
        gamma = _gls_basis_fit(white_h, white_y)
        residual = white_y - white_h @ gamma
        log_det_half = float(np.sum(np.log(np.diag(chol))))
        lml = -0.5 * float(residual @ residual) - log_det_half - 0.5 * rows * math.log(2.0 * math.pi)
        if not math.isfinite(lml):
            return 1e12
        return -lml + penalty

    rng = np.random.default_rng(seed)
    best_value = math.inf
    best_theta: Optional[np.ndarray] = None
    for attempt in range(restarts):
        start = theta0 if attempt == 0 else theta0 + rng.normal(0.0, 1.0, size=3)
        result = optimize.minimize(
            negative_lml,
            start,
            method="Nelder-Mead",
            options={"maxiter": _NM_MAXITER, "xatol": _NM_TOL, "fatol": _NM_TOL},
        )
        if math.isfinite(result.fun) and result.fun < 1e12 and result.fun < best_value:
            best_value = float(result.fun)
            best_theta = np.clip(result.x, theta0 - _LOG_BOX, theta0 + _LOG_BOX)
    if best_theta is None:
        raise OptimizationDiverged("every hyperparameter restart failed to produce a finite likelihood")
    length, signal, noise = np.exp(best_theta)
    return GprHyperparams(float(length), float(signal), float(noise))


def _initial_hyper(
    distances: np.ndarray, basis: np.ndarray, targets: np.ndarray
) -> np.ndarray:
    m = distances.shape[0]
    off_diag = distances[np.triu_indices(m, k=1)]
    positive = off_diag[off_diag > 0]
    length0 = float(np.median(positive)) if positive.size else 1.0
    gamma, *_ = sla.lstsq(basis, targets, lapack_driver="gelsy")
    residual = targets - basis @ gamma
    target_var = float(np.var(targets))
    signal0 = max(float(np.var(residual)), 1e-9 * target_var, 1e-12)
    noise0 = 0.1 * signal0
    return np.log(np.array([length0, signal0, noise0]))


def predict_gpr(model: GprModel, row: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at one raw feature row."""
    row = np.asarray(row, dtype=float)
    if row.shape != (model.kind.dimension,):
        raise DimensionMismatch(
            f"expected a length-{model.kind.dimension} feature row, got shape {row.shape}"
        )
    means, variances = predict_gpr_batch(model, row[None, :])
    return float(means[0]), float(variances[0])


def predict_gpr_batch(model: GprModel, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != model.kind.dimension:
        raise DimensionMismatch(f"expected M x {model.kind.dimension} features")
    standardized = model.normalization.apply(values)
    cross = _pairwise_distances(model.training_inputs.values, standardized)
    # test points are never training indices, so no noise term here
    k_star = model.hyper.signal_variance * np.exp(-cross / model.hyper.length_scale)
    basis = _basis_matrix(standardized)
    means = basis @ model.basis_coefficients + k_star.T @ model.dual_weights

    chol, white_h, basis_gram = model._posterior_factors
    white_k = sla.solve_triangular(chol, k_star, lower=True, check_finite=False)
    prior_var = model.hyper.signal_variance
    data_term = np.sum(white_k**2, axis=0)
    basis_residual = basis.T - white_h.T @ white_k
    if basis_gram.size:
        solved, *_ = sla.lstsq(basis_gram, basis_residual, lapack_driver="gelsy")
        basis_term = np.sum(basis_residual * solved, axis=0)
    else:
        basis_term = np.zeros(values.shape[0])
    variances = np.maximum(prior_var - data_term + basis_term, 0.0)
    return means, variances


# --- shared regressor front end ------------------------------------------------

RegressionModel = Union[LinearModel, GprModel]


def fit_regressor(
    features: FeatureMatrix,
    targets: np.ndarray,
    regressor: Regressor,
    seed: int = 42,
    intercept: Optional[bool] = None,
    nonnegative: bool = False,
    restarts: int = 5,
) -> RegressionModel:
    regressor = Regressor(regressor)
    if regressor is Regressor.LR:
        return fit_linear(features, targets, intercept=intercept, nonnegative=nonnegative)
    return fit_gpr(features, targets, restarts=restarts, seed=seed)


def predict_batch(model: RegressionModel, values: np.ndarray) -> np.ndarray:
    """Mean energy estimates for a raw M x N feature block."""
    if isinstance(model, LinearModel):
        return predict_linear_batch(model, values)
    means, _ = predict_gpr_batch(model, values)
    return means


# --- serialization ------------------------------------------------------------


def model_to_dict(model: RegressionModel) -> dict[str, Any]:
    common = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "normalization": {
            "means": model.normalization.means.tolist(),
            "scales": model.normalization.scales.tolist(),
        },
    }
    if isinstance(model, LinearModel):
        return {
            **common,
            "regressor": "lr",
            "coefficients": model.coefficients.tolist(),
            "intercept": model.intercept,
        }
    return {
        **common,
        "regressor": "gpr",
        "coefficients": model.basis_coefficients.tolist(),
        "hyper": {
            "l": model.hyper.length_scale,
            "sigma_f2": model.hyper.signal_variance,
            "sigma_n2": model.hyper.noise_variance,
        },
        "training_inputs": model.training_inputs.values.tolist(),
        "dual_weights": model.dual_weights.tolist(),
    }


def model_from_dict(payload: dict[str, Any]) -> RegressionModel:
    try:
        version = payload["format_version"]
        if version != MODEL_FORMAT_VERSION:
            raise SchemaViolation(f"unsupported model format_version {version!r}")
        kind = FeatureSetKind(payload["kind"])
        norm = Normalization(
            np.asarray(payload["normalization"]["means"], dtype=float),
            np.asarray(payload["normalization"]["scales"], dtype=float),
        )
        regressor = payload["regressor"]
        if regressor == "lr":
            intercept = payload["intercept"]
            return LinearModel(
                kind=kind,
                coefficients=np.asarray(payload["coefficients"], dtype=float),
                intercept=None if intercept is None else float(intercept),
                normalization=norm,
            )
        if regressor == "gpr":
            hyper = GprHyperparams(
                length_scale=float(payload["hyper"]["l"]),
                signal_variance=float(payload["hyper"]["sigma_f2"]),
                noise_variance=float(payload["hyper"]["sigma_n2"]),
            )
            training = FeatureMatrix(
                np.asarray(payload["training_inputs"], dtype=float), kind, norm
            )
            return GprModel(
                kind=kind,
                hyper=hyper,
                basis_coefficients=np.asarray(payload["coefficients"], dtype=float),
                training_inputs=training,
                dual_weights=np.asarray(payload["dual_weights"], dtype=float),
                normalization=norm,
            )
        raise SchemaViolation(f"unknown regressor {regressor!r}")
    except KeyError as exc:
        raise SchemaViolation(f"model JSON is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"model JSON is malformed: {exc}") from None


def dumps_model(model: RegressionModel) -> str:
    return canonical_json_dumps(model_to_dict(model))


def loads_model(text: str) -> RegressionModel:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid model JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise SchemaViolation("model JSON must be an object")
    return model_from_dict(payload)


def save_model(model: RegressionModel, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path: Union[str, Path]) -> RegressionModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
