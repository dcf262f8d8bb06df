import json
import warnings

import numpy as np
import pytest

from pbrkit.dataio import synth_dirichlet
from pbrkit.histcore import DimensionMismatch
from pbrkit.kernels import KernelSpec, gram
from pbrkit.svm import (
    InvalidProblem, NonConvergenceWarning, OvrModel, SvmModel, count_svs, decision_value,
    decision_values, dual_objective, kkt_violation, ovr_decision_values, ovr_from_dict,
    ovr_to_dict, predict_ovr, train_binary, train_ovr,
)


@pytest.fixture(scope="module")
def blobs():
    data = synth_dirichlet(3, 32, 20, concentration=100.0, seed=5)
    K = gram(KernelSpec.d_rbf("pbr", 1.0), data).values
    return data, K


def random_binary_problem(seed, m=40, dims=16, measure="pbr", gamma=2.0):
    rng = np.random.default_rng(seed)
    X = rng.dirichlet(np.full(dims, 0.5), m)
    y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    return X, y, gram(KernelSpec.d_rbf(measure, gamma), X).values


def check_invariants(model, K, tol):
    assert np.all(model.alpha >= 0) and np.all(model.alpha <= model.C)
    assert abs(model.alpha @ model.y) <= 1e-10
    assert kkt_violation(model.alpha, model.y, K, model.C) <= tol
    assert dual_objective(model.alpha, model.y, K) >= 0


class TestTrainBinary:
    def test_two_point_analytic(self):
        model = train_binary(np.eye(2), [1, -1], C=10)
        np.testing.assert_allclose(model.alpha, [1.0, 1.0], atol=1e-8)
        assert model.bias == pytest.approx(0.0, abs=1e-8)
        assert model.converged
        assert decision_value(model, [1.0, 0.0]) == pytest.approx(1.0, abs=1e-3)
        assert count_svs(model) == 2

    def test_duplicate_point_both_labels(self):
        model = train_binary(np.ones((2, 2)), [1, -1], C=1)
        np.testing.assert_array_equal(model.alpha, [1.0, 1.0])
        assert decision_value(model, [1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("y", [[1, 1, 1], [-1, -1]])
    def test_single_class_rejected(self, y):
        with pytest.raises(InvalidProblem):
            train_binary(np.eye(len(y)), y, C=1)

    @pytest.mark.parametrize("kwargs", [
        dict(K=np.eye(3), y=[1, -1], C=1),
        dict(K=np.ones((2, 3)), y=[1, -1], C=1),
        dict(K=np.eye(2), y=[1, 0], C=1),
        dict(K=np.eye(2), y=[1, -1], C=0),
    ])
    def test_invalid_problem(self, kwargs):
        with pytest.raises(InvalidProblem):
            train_binary(**kwargs)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("C", [0.25, 4.0, 1024.0])
    def test_invariants(self, seed, C):
        _, y, K = random_binary_problem(seed)
        model = train_binary(K, y, C)
        assert model.converged
        check_invariants(model, K, 1e-3)

    def test_indefinite_gram(self):
        # dense low-dimensional histograms give a non-PD PBR kernel; training still works
        _, y, K = random_binary_problem(11, m=60, dims=4)
        assert np.linalg.eigvalsh(K)[0] < 0
        model = train_binary(K, y, C=16.0)
        check_invariants(model, K, 1e-3)

    def test_objective_non_decreasing(self):
        _, y, K = random_binary_problem(3)
        trace = []
        train_binary(K, y, C=8.0, objective_trace=trace)
        assert len(trace) > 1
        assert trace[0] >= 0
        assert np.all(np.diff(trace) >= -1e-12)

    def test_free_support_vector_on_margin(self):
        _, y, K = random_binary_problem(4)
        model = train_binary(K, y, C=64.0, tol=1e-6)
        free = np.flatnonzero((model.alpha > 1e-8) & (model.alpha < model.C - 1e-8))
        assert free.size
        for i in free:
            assert decision_value(model, K[i]) == pytest.approx(y[i], abs=1e-5)

    def test_zero_alphas_give_bias(self):
        model = SvmModel(alpha=np.zeros(3), y=np.array([1.0, -1.0, 1.0]), bias=0.3, C=1.0)
        assert decision_value(model, [5.0, 6.0, 7.0]) == 0.3
        assert count_svs(model) == 0

    def test_decision_value_length_checked(self):
        model = train_binary(np.eye(2), [1, -1], C=1)
        with pytest.raises(DimensionMismatch):
            decision_value(model, [1.0, 0.0, 0.0])
        with pytest.raises(DimensionMismatch):
            decision_values(model, np.ones((2, 3)))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        X = rng.dirichlet(np.full(64, 0.1), 50)
        y = np.where(np.arange(50) % 2 == 0, 1.0, -1.0)
        grid = rng.dirichlet(np.full(64, 0.1), 30)
        spec = KernelSpec.d_rbf("pbr", 1.0)
        model = train_binary(gram(spec, X).values, y, C=4.0, tol=1e-10)
        ref = decision_values(model, gram(spec, grid, X).values)
        perm = rng.permutation(50)
        model_p = train_binary(gram(spec, X[perm]).values, y[perm], C=4.0, tol=1e-10)
        got = decision_values(model_p, gram(spec, grid, X[perm]).values)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-6)

    def test_deterministic(self):
        _, y, K = random_binary_problem(2)
        a, b = train_binary(K, y, 2.0), train_binary(K, y, 2.0)
        assert np.array_equal(a.alpha, b.alpha) and a.bias == b.bias

    def test_non_convergence_warns(self):
        _, y, K = random_binary_problem(1)
        with pytest.warns(NonConvergenceWarning):
            model = train_binary(K, y, C=100.0, tol=1e-12, max_passes=0)
        assert not model.converged
        assert np.all(model.alpha == 0)

    def test_sv_threshold(self):
        model = SvmModel(alpha=np.array([0.0, 1e-13, 2e-12, 0.5]), y=np.ones(4), bias=0.0, C=1.0)
        np.testing.assert_array_equal(model.sv_indices, [2, 3])


class TestOvr:
    def test_separable_training_accuracy(self, blobs):
        data, K = blobs
        ovr = train_ovr(K, data.labels, C=16.0)
        assert len(ovr.models) == 3
        np.testing.assert_array_equal(predict_ovr(ovr, K), data.labels)
        for model in ovr.models:
            check_invariants(model, K, 1e-3)

    def test_two_class_matches_binary(self):
        X, y, K = random_binary_problem(6)
        labels = np.where(y > 0, 0, 1)
        ovr = train_ovr(K, labels, C=2.0)
        binary = train_binary(K, np.where(labels == 0, 1.0, -1.0), C=2.0)
        rng = np.random.default_rng(0)
        rows = gram(KernelSpec.d_rbf("pbr", 2.0), rng.dirichlet(np.full(16, 0.5), 25), X).values
        f = decision_values(binary, rows)
        expected = np.where(f >= 0, 0, 1)
        np.testing.assert_array_equal(predict_ovr(ovr, rows), expected)

    def test_tie_goes_to_first_class(self):
        zero = SvmModel(alpha=np.zeros(3), y=np.array([1.0, -1.0, -1.0]), bias=0.0, C=1.0)
        ovr = OvrModel(models=(zero, zero, zero), classes=(0, 1, 2))
        np.testing.assert_array_equal(predict_ovr(ovr, np.ones((4, 3))), [0, 0, 0, 0])

    def test_model_count_must_match(self):
        zero = SvmModel(alpha=np.zeros(2), y=np.array([1.0, -1.0]), bias=0.0, C=1.0)
        with pytest.raises(InvalidProblem):
            OvrModel(models=(zero,), classes=(0, 1))

    def test_one_class_rejected(self):
        with pytest.raises(InvalidProblem):
            train_ovr(np.eye(3), [2, 2, 2], C=1.0)

    def test_threads_do_not_change_models(self, blobs):
        data, K = blobs
        a = train_ovr(K, data.labels, C=4.0)
        b = train_ovr(K, data.labels, C=4.0, threads=3)
        for ma, mb in zip(a.models, b.models):
            assert np.array_equal(ma.alpha, mb.alpha) and ma.bias == mb.bias

    def test_sv_count_is_union(self):
        m1 = SvmModel(alpha=np.array([0.5, 0.5, 0.0, 0.0]), y=np.array([1.0, -1, -1, -1]), bias=0, C=1)
        m2 = SvmModel(alpha=np.array([0.0, 0.5, 0.5, 0.0]), y=np.array([-1.0, 1, -1, -1]), bias=0, C=1)
        assert count_svs(OvrModel(models=(m1, m2), classes=(0, 1))) == 3

    def test_sv_count_non_increasing_in_C(self, blobs):
        data, K = blobs
        counts = [count_svs(train_ovr(K, data.labels, C=2.0 ** k)) for k in range(-2, 12, 2)]
        assert all(b <= a for a, b in zip(counts, counts[1:])), counts

    def test_json_round_trip(self, blobs):
        data, K = blobs
        ovr = train_ovr(K, data.labels, C=4.0)
        spec = KernelSpec.d_rbf("pbr", 1.0).to_dict()
        doc = json.loads(json.dumps(ovr_to_dict(ovr, spec, data.class_names)))
        assert doc["kernel"] == spec
        back = ovr_from_dict(doc)
        assert back.classes == ovr.classes
        np.testing.assert_array_equal(ovr_decision_values(back, K), ovr_decision_values(ovr, K))
        assert count_svs(back) == count_svs(ovr)
