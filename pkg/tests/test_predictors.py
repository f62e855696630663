import io
import math

import numpy as np
import pytest

from privauction import (
    DegenerateKernelMass,
    EmptyInstance,
    FeatureSet,
    GaussianKernel,
    KOutOfRange,
    LinearKernel,
    ValidationError,
    ValueInterval,
    WeightSpec,
    kernel_regression_weights,
    knn_weights,
    nadaraya_watson_weights,
    ridge_weights,
)
from privauction.errors import IllConditionedWarning, ParseError
from privauction.predictors import build_instance, load_feature_csv


def dense(derived, n):
    out = np.zeros(n)
    out[list(derived.kept)] = derived.weights
    return out


class TestKnn:
    def test_full_neighborhood(self):
        fs = FeatureSet(np.arange(4.0).reshape(4, 1), np.array([0.0]))
        d = knn_weights(fs, 4)
        assert d.weights == (0.25, 0.25, 0.25, 0.25)
        assert d.dropped == ()

    def test_exact_match_single(self):
        fs = FeatureSet(np.array([[0.0], [1.0], [2.0]]), np.array([2.0]))
        d = knn_weights(fs, 1)
        assert d.weights == (1.0,)
        assert d.kept == (2,)
        assert d.dropped == (0, 1)

    def test_two_nearest_by_hand(self):
        fs = FeatureSet(np.array([[0.0], [1.0], [2.0]]), np.array([0.9]))
        d = knn_weights(fs, 2)
        # distances are 0.9, 0.1, 1.1: neighbors are rows 1 and 0
        assert d.kept == (0, 1)
        assert d.weights == (0.5, 0.5)

    def test_distance_ties_take_smaller_index(self):
        fs = FeatureSet(np.array([[1.0], [-1.0], [1.0]]), np.array([0.0]))
        d = knn_weights(fs, 1)
        assert d.kept == (0,)

    def test_k_out_of_range(self):
        fs = FeatureSet(np.array([[0.0]]), np.array([0.0]))
        for k in (0, 2):
            with pytest.raises(KOutOfRange):
                knn_weights(fs, k)

    def test_simplex(self):
        rng = np.random.default_rng(0)
        fs = FeatureSet(rng.normal(size=(7, 3)), rng.normal(size=3))
        d = knn_weights(fs, 3)
        assert all(w >= 0 for w in d.weights)
        assert sum(d.weights) == pytest.approx(1.0, abs=1e-12)


class TestNadarayaWatson:
    def test_single_row(self):
        fs = FeatureSet(np.array([[3.0, 1.0]]), np.array([0.0, 0.0]))
        d = nadaraya_watson_weights(fs)
        assert d.weights == (1.0,)

    def test_equidistant_symmetry(self):
        fs = FeatureSet(np.array([[1.0], [-1.0]]), np.array([0.0]))
        d = nadaraya_watson_weights(fs)
        assert d.weights == (0.5, 0.5)

    def test_gaussian_value_by_hand(self):
        fs = FeatureSet(np.array([[0.0], [1.0]]), np.array([0.0]))
        d = nadaraya_watson_weights(fs, GaussianKernel(1.0))
        z = 1.0 + math.exp(-1.0)
        assert d.weights[0] == pytest.approx(1.0 / z, abs=1e-15)
        assert d.weights[1] == pytest.approx(math.exp(-1.0) / z, abs=1e-15)

    def test_degenerate_mass(self):
        fs = FeatureSet(np.array([[0.0], [1.0]]), np.array([1e6]))
        with pytest.raises(DegenerateKernelMass):
            nadaraya_watson_weights(fs, GaussianKernel(1.0))

    def test_simplex_property(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            fs = FeatureSet(rng.normal(size=(6, 2)), rng.normal(size=2))
            d = nadaraya_watson_weights(fs)
            assert all(w > 0 for w in d.weights)
            assert abs(sum(d.weights) - 1.0) <= 1e-12


class TestRidge:
    def test_identity_design_recovers_query(self):
        fs = FeatureSet(np.eye(3), np.array([1.0, 0.0, 0.0]))
        d = ridge_weights(fs, 1e-8)
        w = dense(d, 3)
        assert np.abs(w - np.array([1.0, 0.0, 0.0])).max() < 1e-6

    def test_scalar_case(self):
        fs = FeatureSet(np.array([[1.0], [1.0]]), np.array([1.0]))
        d = ridge_weights(fs, 1.0)
        assert d.weights == pytest.approx((1 / 3, 1 / 3), rel=1e-15)

    def test_against_explicit_inverse(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            Y = rng.normal(size=(8, 4))
            y = rng.normal(size=4)
            lam = float(rng.uniform(0.05, 2))
            d = ridge_weights(FeatureSet(Y, y), lam)
            explicit = y @ np.linalg.inv(Y.T @ Y + lam * np.eye(4)) @ Y.T
            got = dense(d, 8)
            scale = max(1.0, np.abs(explicit).max())
            assert np.abs(got - explicit).max() <= 1e-8 * scale

    def test_negative_weights_occur(self):
        Y = np.array([[1.0, 0.0], [-1.0, 0.5], [0.3, -2.0]])
        d = ridge_weights(FeatureSet(Y, np.array([1.0, 1.0])), 0.5)
        w = dense(d, 3)
        assert (w < 0).any()

    def test_lambda_must_be_positive(self):
        fs = FeatureSet(np.array([[1.0]]), np.array([1.0]))
        for lam in (0.0, -1.0):
            with pytest.raises(ValidationError):
                ridge_weights(fs, lam)

    def test_prediction_consistency(self):
        rng = np.random.default_rng(3)
        Y = rng.normal(size=(6, 3))
        y = rng.normal(size=3)
        data = rng.uniform(0, 1, 6)
        d = ridge_weights(FeatureSet(Y, y), 0.8)
        via_weights = float(dense(d, 6) @ data)
        textbook = float(y @ np.linalg.solve(Y.T @ Y + 0.8 * np.eye(3), Y.T @ data))
        assert via_weights == pytest.approx(textbook, rel=1e-8)


class TestKernelRegression:
    def test_linear_kernel_matches_ridge(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            Y = rng.normal(size=(7, 3))
            y = rng.normal(size=3)
            lam = float(rng.uniform(0.1, 2))
            fs = FeatureSet(Y, y)
            a = dense(ridge_weights(fs, lam), 7)
            b = dense(kernel_regression_weights(fs, LinearKernel(), lam), 7)
            scale = max(1.0, np.abs(a).max())
            assert np.abs(a - b).max() <= 1e-8 * scale

    def test_single_row_scalar_formula(self):
        fs = FeatureSet(np.array([[2.0]]), np.array([1.0]))
        kernel = GaussianKernel(1.0)
        d = kernel_regression_weights(fs, kernel, 0.5)
        k_qy = math.exp(-1.0)  # exp(-|1-2|^2)
        k_yy = 1.0
        assert d.weights[0] == pytest.approx(k_qy / (k_yy + 0.5), rel=1e-12)

    def test_far_query_drops_everyone(self):
        fs = FeatureSet(np.array([[0.0], [1.0]]), np.array([500.0]))
        d = kernel_regression_weights(fs, GaussianKernel(1.0), 0.5)
        assert d.kept == ()
        with pytest.raises(EmptyInstance):
            build_instance(d, [1.0, 1.0], 1.0, ValueInterval(0.0, 1.0))

    def test_ill_conditioned_warning(self):
        Y = np.array([[1.0, 1.0 + 1e-9], [1.0, 1.0]])
        fs = FeatureSet(Y, np.array([1.0, 1.0]))
        with pytest.warns(IllConditionedWarning):
            kernel_regression_weights(fs, LinearKernel(), 1e-12)

    def test_prediction_consistency(self):
        # weighted sum of the data equals the textbook prediction directly
        rng = np.random.default_rng(6)
        Y = rng.normal(size=(6, 2))
        y = rng.normal(size=2)
        data = rng.uniform(0, 1, 6)
        kernel = GaussianKernel(1.2)
        d = kernel_regression_weights(FeatureSet(Y, y), kernel, 0.6)
        via_weights = float(dense(d, 6) @ data)
        fs = FeatureSet(Y, y)
        gram = kernel.gram(fs) + 0.6 * np.eye(6)
        textbook = float(kernel.against_query(fs) @ np.linalg.solve(gram, data))
        assert via_weights == pytest.approx(textbook, rel=1e-8)


class TestWeightSpec:
    def test_dispatch(self):
        fs = FeatureSet(np.array([[0.0], [1.0]]), np.array([0.0]))
        assert WeightSpec("knn", k=1).derive(fs).kept == (0,)
        assert WeightSpec("nadaraya-watson").derive(fs).n_kept == 2
        towards = FeatureSet(np.array([[0.5], [1.0]]), np.array([1.0]))
        assert WeightSpec("ridge", lam=1.0).derive(towards).n_kept >= 1
        assert WeightSpec("kernel-regression", lam=1.0).derive(towards).n_kept >= 1

    def test_missing_parameters(self):
        fs = FeatureSet(np.array([[0.0]]), np.array([0.0]))
        with pytest.raises(ValidationError):
            WeightSpec("knn").derive(fs)
        with pytest.raises(ValidationError):
            WeightSpec("ridge").derive(fs)
        with pytest.raises(ValidationError):
            WeightSpec("nope").derive(fs)


class TestFeatureCsv:
    def test_plain_matrix(self):
        ids, matrix = load_feature_csv(io.StringIO("1,2\n3,4\n"))
        assert ids is None
        assert matrix.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_header_skipped(self):
        ids, matrix = load_feature_csv(io.StringIO("age,height\n1,2\n"))
        assert matrix.tolist() == [[1.0, 2.0]]

    def test_id_column(self):
        ids, matrix = load_feature_csv(io.StringIO("alice,1,2\nbob,3,4\n"), id_column=True)
        assert ids == ["alice", "bob"]
        assert matrix.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_ragged_rows_rejected(self):
        with pytest.raises(ParseError, match="columns"):
            load_feature_csv(io.StringIO("1,2\n3\n"))

    def test_non_numeric_cell(self):
        with pytest.raises(ParseError, match="not numeric"):
            load_feature_csv(io.StringIO("1,2\n3,x\n"))

    def test_empty(self):
        with pytest.raises(ParseError):
            load_feature_csv(io.StringIO(""))


class TestBuildInstance:
    def test_costs_follow_kept_rows(self):
        fs = FeatureSet(np.array([[0.0], [1.0], [2.0]]), np.array([0.0]))
        d = knn_weights(fs, 2)
        inst = build_instance(d, [5.0, 6.0, 7.0], 1.0, ValueInterval(0.0, 1.0))
        assert inst.weights == (0.5, 0.5)
        assert inst.unit_costs == (5.0, 6.0)

    def test_costs_length_checked(self):
        fs = FeatureSet(np.array([[0.0], [1.0], [2.0]]), np.array([0.0]))
        d = knn_weights(fs, 2)
        with pytest.raises(ValidationError, match="unit costs"):
            build_instance(d, [5.0, 6.0], 1.0, ValueInterval(0.0, 1.0))
