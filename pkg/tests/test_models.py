import math

import numpy as np
import pytest

from labeldp.data import Conditional, Dataset, MixtureModel, gen_mixture
from labeldp.models import (
    LogisticHyper,
    TrainingDivergedError,
    bayes_model,
    constant_model,
    cross_entropy_grad,
    cross_entropy_loss,
    load_model,
    log_loss,
    majority_table,
    save_model,
    stability_threshold,
    train_logistic,
)


def toy_separable():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    return Dataset(X, y, 2)


class TestTrainLogistic:
    def test_separable_reaches_full_training_accuracy(self):
        ds = toy_separable()
        model = train_logistic(ds, LogisticHyper(iterations=500), seed=0)
        assert np.mean(model.predict(ds.features) == ds.labels) == 1.0

    def test_constant_labels_dominate_predictions(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        ds = Dataset(X, np.ones(20, dtype=int), 2)
        model = train_logistic(ds, LogisticHyper(iterations=2000), seed=0)
        assert np.all(model.predict_proba(X)[:, 1] >= 0.99)

    def test_gradient_matches_central_finite_differences(self):
        """Finite-difference oracle at step 1e-5, relative tolerance 1e-4,
        at 10 random weight settings."""
        rng = np.random.default_rng(42)
        design = np.hstack([rng.normal(size=(12, 3)), np.ones((12, 1))])
        onehot = np.zeros((12, 3))
        onehot[np.arange(12), rng.integers(0, 3, 12)] = 1.0
        h = 1e-5
        for trial in range(10):
            W = rng.normal(size=(4, 3))
            grad = cross_entropy_grad(W, design, onehot, l2=0.1)
            numeric = np.zeros_like(W)
            for i in range(W.shape[0]):
                for j in range(W.shape[1]):
                    Wp, Wm = W.copy(), W.copy()
                    Wp[i, j] += h
                    Wm[i, j] -= h
                    numeric[i, j] = (
                        cross_entropy_loss(Wp, design, onehot, l2=0.1)
                        - cross_entropy_loss(Wm, design, onehot, l2=0.1)
                    ) / (2 * h)
            denom = np.maximum(np.abs(numeric), 1e-8)
            assert np.max(np.abs(grad - numeric) / denom) < 1e-4

    def test_loss_non_increasing_at_stability_threshold(self):
        ds = toy_separable()
        lr = stability_threshold(ds)
        model = train_logistic(ds, LogisticHyper(learning_rate=lr, iterations=200), seed=0)
        diffs = np.diff(model.loss_history)
        assert np.all(diffs <= 1e-12)

    def test_divergence_error_names_iteration(self):
        # The L2 term turns an absurd step size into multiplicative blow-up.
        ds = toy_separable()
        with np.errstate(over="ignore"), pytest.raises(TrainingDivergedError, match="iteration"):
            train_logistic(ds, LogisticHyper(learning_rate=1e12, iterations=200, l2=1.0), seed=0)

    def test_deterministic(self):
        ds = toy_separable()
        a = train_logistic(ds, LogisticHyper(iterations=100), seed=0)
        b = train_logistic(ds, LogisticHyper(iterations=100), seed=0)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_class_weights_change_fit(self):
        X = np.array([[0.0], [0.1], [-0.1], [0.05]])
        ds = Dataset(X, np.array([0, 0, 0, 1]), 2)
        plain = train_logistic(ds, LogisticHyper(iterations=300), seed=0)
        boosted = train_logistic(
            ds, LogisticHyper(iterations=300, class_weights=np.array([1.0, 50.0])), seed=0
        )
        assert boosted.predict_proba(X)[:, 1].mean() > plain.predict_proba(X)[:, 1].mean()


class TestAnalyticModels:
    def test_bayes_equidistant_point_is_symmetric(self):
        cond = MixtureModel(2, 4, 1.0).conditional()
        model = bayes_model(cond)
        midpoint = np.array([[0.5, 0.5, 0.0, 0.0]])
        np.testing.assert_allclose(model.predict_proba(midpoint)[0], [0.5, 0.5], atol=1e-12)

    def test_bayes_at_component_mean(self):
        cond = MixtureModel(2, 50, 1.0).conditional()
        probs = bayes_model(cond).predict_proba(np.eye(2, 50)[:1])[0]
        np.testing.assert_allclose(probs, [0.731059, 0.268941], atol=1e-6)

    def test_bayes_one_hot_conditional(self):
        cond = Conditional(2, lambda X: np.tile([1.0, 0.0], (X.shape[0], 1)))
        assert np.all(bayes_model(cond).predict(np.zeros((5, 1))) == 0)

    def test_constant_model_ignores_input(self):
        model = constant_model([0.97, 0.03])
        probs = model.predict_proba(np.random.default_rng(0).normal(size=(4, 6)))
        np.testing.assert_array_equal(probs, np.tile([0.97, 0.03], (4, 1)))

    def test_constant_model_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            constant_model([0.5, 0.6])

    def test_constant_log_loss_is_label_entropy_at_matching_marginal(self):
        """Labels at exactly the 3% marginal: loss equals the entropy
        H(0.03) = 0.134742 nats."""
        labels = np.zeros(10000, dtype=int)
        labels[:300] = 1
        ds = Dataset(np.zeros((10000, 1)), labels, 2)
        loss = log_loss(constant_model([0.97, 0.03]), ds)
        np.testing.assert_allclose(loss, 0.13474216817976674, atol=1e-12)


class TestMajorityTable:
    def test_deterministic_labels_memorized(self):
        X = np.concatenate([np.ones(10), -np.ones(10)])[:, None]
        y = np.concatenate([np.ones(10, dtype=int), np.zeros(10, dtype=int)])
        ds = Dataset(X, y, 2)
        model = majority_table(ds)
        assert np.mean(model.predict(X) == y) == 1.0

    def test_majority_vote(self):
        X = np.zeros((5, 1))
        ds = Dataset(X, np.array([1, 1, 1, 0, 0]), 2)
        assert majority_table(ds).predict(np.zeros((1, 1)))[0] == 1

    def test_tie_goes_to_lowest_class(self):
        ds = Dataset(np.zeros((4, 1)), np.array([0, 1, 0, 1]), 2)
        assert majority_table(ds).predict(np.zeros((1, 1)))[0] == 0

    def test_unseen_features_are_uniform(self):
        ds = Dataset(np.zeros((2, 1)), np.array([0, 1]), 2)
        probs = majority_table(ds).predict_proba(np.ones((1, 1)))
        np.testing.assert_allclose(probs[0], [0.5, 0.5])

    def test_beats_every_constant_predictor_on_training_data(self):
        ds, _ = gen_mixture(MixtureModel(3, 3, 1.0), 200, seed=0)
        table_acc = np.mean(majority_table(ds).predict(ds.features) == ds.labels)
        for c in range(3):
            const_acc = np.mean(ds.labels == c)
            assert table_acc >= const_acc


class TestLogLoss:
    def test_perfect_one_hot_is_tiny_after_clamping(self):
        ds = Dataset(np.zeros((3, 1)), np.zeros(3, dtype=int), 2)
        assert log_loss(constant_model([1.0, 0.0]), ds) <= 1e-14

    def test_uniform_binary_is_ln_two(self):
        ds = Dataset(np.zeros((7, 1)), np.array([0, 1, 0, 1, 0, 1, 0]), 2)
        np.testing.assert_allclose(log_loss(constant_model([0.5, 0.5]), ds), math.log(2), atol=1e-12)

    def test_skewed_constant_on_all_zero_labels(self):
        ds = Dataset(np.zeros((9, 1)), np.zeros(9, dtype=int), 2)
        np.testing.assert_allclose(
            log_loss(constant_model([0.97, 0.03]), ds), 0.030459207484708574, atol=1e-12
        )


class TestModelContracts:
    @pytest.mark.parametrize("kind", ["logistic", "bayes", "constant", "majority"])
    def test_probability_rows_sum_to_one(self, kind):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(1000, 3))
        if kind == "logistic":
            ds = Dataset(X[:50], rng.integers(0, 3, 50), 3)
            model = train_logistic(ds, LogisticHyper(iterations=20), seed=0)
        elif kind == "bayes":
            model = bayes_model(MixtureModel(3, 3, 2.0).conditional())
        elif kind == "constant":
            model = constant_model([0.2, 0.3, 0.5])
        else:
            model = majority_table(Dataset(X[:10], rng.integers(0, 3, 10), 3))
        probs = model.predict_proba(X)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_save_load_round_trip_logistic(self, tmp_path):
        ds = toy_separable()
        model = train_logistic(ds, LogisticHyper(iterations=50), seed=0)
        path = tmp_path / "model.txt"
        save_model(model, str(path))
        back = load_model(str(path))
        np.testing.assert_array_equal(back.weights, model.weights)
        np.testing.assert_array_equal(
            back.predict_proba(ds.features), model.predict_proba(ds.features)
        )

    def test_save_load_round_trip_constant(self, tmp_path):
        model = constant_model([0.97, 0.03])
        path = tmp_path / "model.txt"
        save_model(model, str(path))
        back = load_model(str(path))
        np.testing.assert_array_equal(back.probs, model.probs)
