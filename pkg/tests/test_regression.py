import math

import numpy as np
import pytest

from decenergy.errors import DimensionMismatch, RankDeficient, SchemaViolation
from decenergy.regression import (
    FeatureMatrix,
    GprHyperparams,
    default_intercept,
    fit_gpr,
    fit_linear,
    fit_regressor,
    kernel_exponential,
    loads_model,
    dumps_model,
    log_marginal_likelihood,
    model_from_dict,
    model_to_dict,
    predict_batch,
    predict_gpr,
    predict_gpr_batch,
    predict_linear,
    predict_linear_batch,
    standardize,
)
from decenergy.types import FeatureSetKind, Regressor

RNG = np.random.default_rng(2024)


def perf_matrix(values) -> FeatureMatrix:
    return FeatureMatrix(np.asarray(values, dtype=float), FeatureSetKind.PERF_CTC)


def random_perf_matrix(rows: int, rng=RNG) -> FeatureMatrix:
    return perf_matrix(rng.uniform(1.0, 100.0, size=(rows, 3)))


class TestStandardize:
    def test_two_point_column(self):
        mat = FeatureMatrix(np.array([[1.0], [3.0]]), FeatureSetKind.TEMPORAL)
        out = standardize(mat)
        expected = 1.0 / math.sqrt(2.0)  # sample std of (1, 3) is sqrt(2)
        assert out.values[:, 0] == pytest.approx([-expected, expected], abs=1e-15)

    def test_constant_column_keeps_scale_one(self):
        mat = perf_matrix([[5.0, 1.0, 2.0], [5.0, 3.0, 4.0]])
        out = standardize(mat)
        assert np.all(out.values[:, 0] == 0.0)
        assert out.normalization.scales[0] == 1.0

    def test_normalization_applies_to_new_rows(self):
        mat = random_perf_matrix(10)
        out = standardize(mat)
        fresh = out.normalization.apply(mat.values)
        assert np.array_equal(fresh, out.values)

    def test_wrong_dimension_rejected(self):
        with pytest.raises(DimensionMismatch):
            FeatureMatrix(np.ones((4, 2)), FeatureSetKind.PERF_CTC)

    def test_non_finite_rejected(self):
        with pytest.raises(SchemaViolation):
            perf_matrix([[1.0, np.inf, 2.0]])


class TestFitLinear:
    def test_exact_recovery_without_intercept(self):
        mat = random_perf_matrix(40)
        truth = np.array([0.25, 1.5, 3.0])
        targets = mat.values @ truth
        model = fit_linear(mat, targets, intercept=False)
        assert model.coefficients == pytest.approx(truth, rel=1e-10)
        assert model.intercept is None

    def test_exact_recovery_with_intercept(self):
        mat = random_perf_matrix(40)
        truth = np.array([2.0, -0.5, 1.0])
        targets = mat.values @ truth + 7.5
        model = fit_linear(mat, targets, intercept=True)
        assert model.coefficients == pytest.approx(truth, rel=1e-10)
        assert model.intercept == pytest.approx(7.5, rel=1e-9)

    def test_default_intercept_only_for_temporal(self):
        assert default_intercept(FeatureSetKind.TEMPORAL)
        assert not default_intercept(FeatureSetKind.PERF_CTC)
        assert not default_intercept(FeatureSetKind.VALGRIND_13PE)

    def test_predictions_in_raw_units(self):
        mat = random_perf_matrix(30)
        truth = np.array([1.0, 2.0, 3.0])
        model = fit_linear(mat, mat.values @ truth, intercept=False)
        row = np.array([10.0, 20.0, 30.0])
        assert predict_linear(model, row) == pytest.approx(row @ truth, rel=1e-10)

    def test_batch_matches_single(self):
        mat = random_perf_matrix(25)
        targets = mat.values @ np.array([1.0, 0.5, 2.0]) + 1.0
        model = fit_linear(mat, targets, intercept=True)
        batch = predict_linear_batch(model, mat.values)
        singles = [predict_linear(model, row) for row in mat.values]
        assert batch == pytest.approx(singles, rel=1e-12)

    def test_nonnegative_clamps_at_zero(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(1.0, 10.0, size=(60, 3))
        # the middle column truly contributes negatively
        targets = x @ np.array([2.0, -1.0, 0.5])
        mat = perf_matrix(x)
        model = fit_linear(mat, targets, intercept=False, nonnegative=True)
        assert np.all(model.coefficients >= -1e-12)
        free = fit_linear(mat, targets, intercept=False)
        assert free.coefficients[1] < 0

    def test_rank_deficient_rejected(self):
        x = RNG.uniform(1.0, 10.0, size=(20, 3))
        x[:, 1] = 2.0 * x[:, 0]
        with pytest.raises(RankDeficient):
            fit_linear(perf_matrix(x), x @ np.ones(3), intercept=False)

    def test_target_row_count_mismatch(self):
        mat = random_perf_matrix(10)
        with pytest.raises(DimensionMismatch):
            fit_linear(mat, np.ones(9))


class TestKernel:
    def test_closed_form_value(self):
        hyper = GprHyperparams(length_scale=2.0, signal_variance=4.0,
                               noise_variance=0.25)
        xs = np.array([0.0, 0.0])
        xt = np.array([2.0, 0.0])
        assert kernel_exponential(xs, xt, hyper) == pytest.approx(
            4.0 * math.exp(-1.0), rel=1e-15)

    def test_same_index_adds_noise(self):
        hyper = GprHyperparams(length_scale=1.0, signal_variance=1.0,
                               noise_variance=0.5)
        x = np.array([1.0])
        assert kernel_exponential(x, x, hyper, same_index=True) == pytest.approx(1.5)
        assert kernel_exponential(x, x, hyper) == pytest.approx(1.0)

    def test_symmetry(self):
        hyper = GprHyperparams(length_scale=0.7, signal_variance=2.0,
                               noise_variance=0.0)
        a, b = np.array([1.0, 2.0]), np.array([3.0, -1.0])
        assert kernel_exponential(a, b, hyper) == kernel_exponential(b, a, hyper)

    def test_invalid_hyperparams(self):
        with pytest.raises(SchemaViolation):
            GprHyperparams(length_scale=0.0, signal_variance=1.0, noise_variance=0.1)
        with pytest.raises(SchemaViolation):
            GprHyperparams(length_scale=1.0, signal_variance=-1.0, noise_variance=0.1)


class TestLogMarginalLikelihood:
    def test_two_point_closed_form(self):
        # an affine basis interpolates two points exactly, leaving only the
        # determinant and constant terms
        hyper = GprHyperparams(length_scale=1.0, signal_variance=1.0,
                               noise_variance=1.0)
        mat = FeatureMatrix(np.array([[0.0], [1.0]]), FeatureSetKind.TEMPORAL)
        targets = np.array([0.3, -0.7])
        basis = np.column_stack([np.ones(2), mat.values])
        k_diag = 2.0
        k_off = math.exp(-1.0)
        det = k_diag**2 - k_off**2
        expected = -0.5 * math.log(det) - math.log(2.0 * math.pi)
        got = log_marginal_likelihood(hyper, mat, targets, basis)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_against_unprofiled_dense_formula(self):
        rng = np.random.default_rng(77)
        x = rng.normal(size=(8, 3))
        y = rng.normal(size=8)
        mat = perf_matrix(np.abs(x) + 1.0)
        basis = np.column_stack([np.ones(8), mat.values])
        hyper = GprHyperparams(length_scale=1.3, signal_variance=0.8,
                               noise_variance=0.4)

        d = np.linalg.norm(mat.values[:, None, :] - mat.values[None, :, :], axis=2)
        cov = 0.8 * np.exp(-d / 1.3) + 0.4 * np.eye(8)
        cov_inv = np.linalg.inv(cov)
        gamma = np.linalg.solve(basis.T @ cov_inv @ basis, basis.T @ cov_inv @ y)
        resid = y - basis @ gamma
        dense = (-0.5 * resid @ cov_inv @ resid
                 - 0.5 * np.linalg.slogdet(cov)[1]
                 - 4.0 * math.log(2.0 * math.pi))
        got = log_marginal_likelihood(hyper, mat, y, basis)
        assert got == pytest.approx(dense, rel=1e-8)


class TestFitGpr:
    def test_interpolates_noiseless_linear_data(self):
        mat = random_perf_matrix(25)
        targets = mat.values @ np.array([1.0, 2.0, 0.5]) + 3.0
        model = fit_gpr(mat, targets, seed=0)
        pred, _ = predict_gpr_batch(model, mat.values)
        assert pred == pytest.approx(targets, rel=1e-6)

    def test_fixed_hyper_skips_optimization(self):
        mat = random_perf_matrix(12)
        targets = np.sin(mat.values[:, 0])
        hyper = GprHyperparams(length_scale=2.0, signal_variance=1.0,
                               noise_variance=0.1)
        model = fit_gpr(mat, targets, hyper=hyper)
        assert model.hyper == hyper

    def test_zero_signal_variance_equals_basis_fit(self):
        rng = np.random.default_rng(3)
        mat = perf_matrix(rng.uniform(1.0, 50.0, size=(15, 3)))
        targets = rng.normal(size=15)
        hyper = GprHyperparams(length_scale=1.0, signal_variance=0.0,
                               noise_variance=0.5)
        model = fit_gpr(mat, targets, hyper=hyper)
        pred, _ = predict_gpr_batch(model, mat.values)

        std = standardize(mat)
        basis = np.column_stack([np.ones(15), std.values])
        gamma, *_ = np.linalg.lstsq(basis, targets, rcond=None)
        assert pred == pytest.approx(basis @ gamma, abs=1e-10)

    def test_single_prediction_matches_batch(self):
        mat = random_perf_matrix(15)
        targets = mat.values.sum(axis=1)
        model = fit_gpr(mat, targets, seed=1)
        mean_b, var_b = predict_gpr_batch(model, mat.values[:2])
        mean0, var0 = predict_gpr(model, mat.values[0])
        assert mean0 == pytest.approx(mean_b[0], rel=1e-12)
        assert var0 == pytest.approx(var_b[0], abs=1e-12)

    def test_variance_nonnegative_and_grows_off_data(self):
        mat = random_perf_matrix(20)
        targets = np.log(mat.values[:, 0])
        model = fit_gpr(mat, targets, seed=2)
        _, var_on = predict_gpr_batch(model, mat.values)
        far = np.full((1, 3), 1e4)
        _, var_off = predict_gpr_batch(model, far)
        assert np.all(var_on >= 0.0)
        assert var_off[0] >= np.median(var_on)

    def test_same_seed_same_model(self):
        mat = random_perf_matrix(18)
        targets = np.sqrt(mat.values[:, 1])
        a = fit_gpr(mat, targets, seed=9)
        b = fit_gpr(mat, targets, seed=9)
        assert a.hyper == b.hyper

    def test_target_row_count_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fit_gpr(random_perf_matrix(10), np.ones(11))


class TestSerialization:
    def test_gpr_round_trip_preserves_predictions_exactly(self):
        mat = random_perf_matrix(12)
        targets = mat.values @ np.array([0.1, 0.2, 0.3])
        model = fit_gpr(mat, targets, seed=4)
        clone = loads_model(dumps_model(model))
        probe = RNG.uniform(1.0, 100.0, size=(5, 3))
        base_mean, base_var = predict_gpr_batch(model, probe)
        clone_mean, clone_var = predict_gpr_batch(clone, probe)
        assert np.array_equal(base_mean, clone_mean)
        assert np.array_equal(base_var, clone_var)

    def test_linear_round_trip(self):
        mat = random_perf_matrix(12)
        targets = mat.values @ np.array([1.0, 2.0, 3.0]) + 0.5
        model = fit_linear(mat, targets, intercept=True)
        clone = model_from_dict(model_to_dict(model))
        probe = RNG.uniform(1.0, 100.0, size=(4, 3))
        assert np.array_equal(predict_linear_batch(model, probe),
                              predict_linear_batch(clone, probe))

    def test_missing_key_is_schema_violation(self):
        mat = random_perf_matrix(8)
        payload = model_to_dict(fit_linear(mat, mat.values.sum(axis=1)))
        payload.pop("coefficients")
        with pytest.raises(SchemaViolation):
            model_from_dict(payload)

    def test_unknown_regressor_rejected(self):
        mat = random_perf_matrix(8)
        payload = model_to_dict(fit_linear(mat, mat.values.sum(axis=1)))
        payload["regressor"] = "svm"
        with pytest.raises(SchemaViolation):
            model_from_dict(payload)


class TestDispatch:
    def test_fit_regressor_lr(self):
        mat = random_perf_matrix(20)
        targets = mat.values @ np.array([1.0, 1.0, 1.0])
        model = fit_regressor(mat, targets, Regressor.LR)
        assert predict_batch(model, mat.values) == pytest.approx(targets, rel=1e-9)

    def test_fit_regressor_gpr(self):
        mat = random_perf_matrix(15)
        targets = mat.values @ np.array([2.0, 1.0, 0.0])
        model = fit_regressor(mat, targets, Regressor.GPR, seed=0)
        assert predict_batch(model, mat.values) == pytest.approx(targets, rel=1e-5)
