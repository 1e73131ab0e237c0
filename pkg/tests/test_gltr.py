import numpy as np
import pytest

from dftbench.corpus import Label
from dftbench.gltr import (BIN_EDGES, GltrError, GltrFeatureVector, GltrModel,
                           TrainingGrid, _fit_logistic, _stratified_folds,
                           extract_features, predict, regularized_loss, train)
from dftbench.lm_backend import TokenScore
from dftbench.corpus import Token


def scores_with_ranks(ranks):
    return [TokenScore(Token(0, "x"), 0.1, r) for r in ranks]


class TestFeatures:
    def test_bin_boundaries(self):
        feats = extract_features(scores_with_ranks([1, 10, 11, 100, 101, 1000, 1001, 5000]))
        assert np.allclose(feats.fractions, [2 / 8, 2 / 8, 2 / 8, 2 / 8])

    def test_all_top_bin(self):
        feats = extract_features(scores_with_ranks([1, 2, 3]))
        assert np.allclose(feats.fractions, [1, 0, 0, 0])
        assert feats.token_count == 3

    def test_fractions_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            ranks = rng.integers(1, 3000, size=50)
            feats = extract_features(scores_with_ranks(list(ranks)))
            assert abs(feats.fractions.sum() - 1.0) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(GltrError):
            extract_features([])

    def test_vector_validation(self):
        with pytest.raises(GltrError):
            GltrFeatureVector(np.array([0.5, 0.5, 0.5, 0.5]), 4)
        with pytest.raises(GltrError):
            GltrFeatureVector(np.array([1.0, 0, 0]), 3)


def random_dataset(rng, n=40, dim=4):
    X = rng.random((n, dim))
    w_true = rng.normal(size=dim) * 3
    y = (X @ w_true + rng.normal(size=n) * 0.3 > np.median(X @ w_true)).astype(int)
    return X, y


class TestOptimizer:
    def test_gradient_vanishes_at_optimum(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            X, y = random_dataset(rng)
            for C in (10.0, 1.0, 0.1):
                w, b = _fit_logistic(X, y, C)
                # analytic gradient via central finite differences of the loss
                h = 1e-5
                theta = np.append(w, b)
                grad = np.zeros_like(theta)
                for i in range(len(theta)):
                    tp, tm = theta.copy(), theta.copy()
                    tp[i] += h
                    tm[i] -= h
                    grad[i] = (regularized_loss(tp[:-1], tp[-1], X, y, C)
                               - regularized_loss(tm[:-1], tm[-1], X, y, C)) / (2 * h)
                assert np.linalg.norm(grad) <= 1e-6

    def test_stronger_regularization_shrinks_weights(self):
        rng = np.random.default_rng(3)
        X, y = random_dataset(rng)
        w_loose, _ = _fit_logistic(X, y, 100.0)
        w_tight, _ = _fit_logistic(X, y, 0.01)
        assert np.linalg.norm(w_tight) < np.linalg.norm(w_loose)

    def test_separable_data_classified_perfectly(self):
        X = np.array([[0.0, 0], [0.1, 0], [0.9, 0], [1.0, 0]] * 3)
        y = np.array([0, 0, 1, 1] * 3)
        w, b = _fit_logistic(X, y, 100.0)
        preds = (X @ w + b >= 0).astype(int)
        assert np.array_equal(preds, y)


class TestFolds:
    def test_stratified_and_deterministic(self):
        y = np.array([0] * 10 + [1] * 10)
        folds = _stratified_folds(y, 5, seed=1)
        assert np.array_equal(folds, _stratified_folds(y, 5, seed=1))
        for k in range(5):
            mask = folds == k
            assert np.sum(y[mask] == 0) == 2
            assert np.sum(y[mask] == 1) == 2

    def test_seed_changes_assignment(self):
        y = np.array([0] * 20 + [1] * 20)
        assert not np.array_equal(_stratified_folds(y, 5, 1),
                                  _stratified_folds(y, 5, 2))


class TestTrain:
    @pytest.fixture
    def dataset(self):
        rng = np.random.default_rng(11)
        pos = rng.dirichlet([20, 4, 1, 1], size=30)
        neg = rng.dirichlet([4, 8, 8, 4], size=30)
        X = np.vstack([pos, neg])
        y = [1] * 30 + [0] * 30
        return X, y

    def test_chooses_from_grid_and_reports_cv(self, dataset):
        X, y = dataset
        model = train(X, y, TrainingGrid(), seed=0)
        assert model.chosen_C in TrainingGrid().C_values
        assert 0.0 <= model.cv_score <= 1.0

    def test_deterministic(self, dataset):
        X, y = dataset
        a = train(X, y, seed=5)
        b = train(X, y, seed=5)
        assert np.array_equal(a.weights, b.weights)
        assert a.bias == b.bias
        assert a.chosen_C == b.chosen_C

    def test_ties_prefer_larger_C(self):
        # perfectly separable: every C reaches CV F1 1.0
        X = np.array([[1.0, 0, 0, 0]] * 10 + [[0, 0, 0, 1.0]] * 10)
        y = [1] * 10 + [0] * 10
        model = train(X, y, TrainingGrid(), seed=0)
        assert model.chosen_C == 100.0
        assert model.cv_score == 1.0

    def test_accepts_label_enums(self, dataset):
        X, _ = dataset
        labels = [Label.SYNTHETIC] * 30 + [Label.REAL] * 30
        model = train(X, labels, seed=0)
        score, label = predict(model, X[0])
        assert label in (Label.SYNTHETIC, Label.REAL)

    def test_needs_both_classes(self):
        X = np.random.default_rng(0).random((10, 4))
        with pytest.raises(GltrError):
            train(X, [1] * 10)

    def test_unknown_label_rejected(self):
        X = np.random.default_rng(0).random((4, 4))
        with pytest.raises(GltrError):
            train(X, [Label.SYNTHETIC, Label.REAL, Label.UNKNOWN, Label.REAL])

    def test_length_mismatch(self):
        with pytest.raises(GltrError):
            train(np.zeros((3, 4)), [0, 1])


class TestModelIO:
    def test_roundtrip(self, tmp_path, pipe):
        from mockpipe import generate_synthetic, sample_human, train_detector
        model = train_detector(pipe, generate_synthetic(pipe, 8, 1),
                               sample_human(pipe, 8, 2))
        path = tmp_path / "model.json"
        model.save(path)
        loaded = GltrModel.load(path)
        assert np.array_equal(loaded.weights, model.weights)
        assert loaded.bias == model.bias
        assert loaded.threshold == model.threshold

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"feature_version": "other", "weights": [0,0,0,0],'
                        ' "bias": 0, "chosen_C": 1, "cv_score": 0}')
        with pytest.raises(GltrError):
            GltrModel.load(path)


class TestPredict:
    def test_score_and_threshold(self):
        model = GltrModel(weights=np.array([4.0, 0, 0, -4.0]), bias=0.0,
                          chosen_C=1.0, cv_score=1.0)
        score_hi, label_hi = predict(model, np.array([1.0, 0, 0, 0]))
        score_lo, label_lo = predict(model, np.array([0, 0, 0, 1.0]))
        assert score_hi > 0.5 and label_hi is Label.SYNTHETIC
        assert score_lo < 0.5 and label_lo is Label.REAL

    def test_boundary_is_synthetic(self):
        model = GltrModel(weights=np.zeros(4), bias=0.0, chosen_C=1.0, cv_score=0.0)
        score, label = predict(model, np.array([0.25] * 4))
        assert score == 0.5
        assert label is Label.SYNTHETIC
