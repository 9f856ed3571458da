import numpy as np
import pytest

from finprint.forest import (
    CLASSIFICATION,
    REGRESSION,
    Forest,
    TrainConfig,
    predict_proba,
    predict_regression,
    train,
)


def smooth_1d(x):
    return 0.5 + 0.4 * np.sin(2.5 * x)


class TestRegression:
    def test_constant_targets_fit_exactly(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 4))
        y = np.full(30, 0.3)
        forest = train(X, y, TrainConfig(n_trees=10, seed=1))
        preds = predict_regression(forest, X)
        assert np.all(preds == 0.3)

    def test_single_stump_returns_leaf_mean(self):
        X = np.array([[1.0], [1.0]])
        y = np.array([0.3, 0.3])
        forest = train(X, y, TrainConfig(n_trees=1, seed=0))
        assert predict_regression(forest, np.array([5.0])) == 0.3

    def test_two_tree_mean(self):
        # Hand-built forest: trees predicting 0.2 and 0.8 average to 0.5.
        from finprint.forest import Tree

        leaf = lambda v: Tree(
            feature=np.array([-1], dtype=np.int32),
            threshold=np.zeros(1),
            left=np.array([-1], dtype=np.int32),
            right=np.array([-1], dtype=np.int32),
            value=np.array([v]),
        )
        forest = Forest([leaf(0.2), leaf(0.8)], REGRESSION, TrainConfig(n_trees=2), 3)
        assert predict_regression(forest, np.zeros(3)) == pytest.approx(0.5)

    def test_memorizes_distinct_points_without_bootstrap(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(10, 3))
        y = rng.uniform(size=10)
        cfg = TrainConfig(n_trees=5, min_leaf=1, features_per_split=3, seed=2, bootstrap=False)
        forest = train(X, y, cfg, REGRESSION)
        preds = predict_regression(forest, X)
        assert np.abs(preds - y).max() < 1e-9

    def test_smooth_function_held_out_error(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(size=(400, 1))
        y = smooth_1d(X[:, 0])
        forest = train(X, y, TrainConfig(n_trees=50, seed=3))
        Xt = rng.uniform(size=(100, 1))
        preds = predict_regression(forest, Xt)
        mae = np.abs(preds - smooth_1d(Xt[:, 0])).mean()
        assert mae < 0.03  # calibrated on first run; generous margin

    def test_dimension_mismatch_raises(self):
        X = np.random.default_rng(1).normal(size=(10, 4))
        forest = train(X, np.zeros(10), TrainConfig(n_trees=2, seed=0))
        with pytest.raises(ValueError):
            predict_regression(forest, np.zeros(5))


class TestClassification:
    def test_single_class_probability_one(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(20, 3))
        y = np.ones(20, dtype=int)
        forest = train(X, y, TrainConfig(n_trees=5, seed=0), CLASSIFICATION)
        p = predict_proba(forest, rng.normal(size=3))
        assert p.shape == (1,)
        assert p[0] == 1.0

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 5))
        y = (rng.uniform(size=60) > 0.5).astype(int)
        forest = train(X, y, TrainConfig(n_trees=20, seed=4, min_leaf=5), CLASSIFICATION)
        P = predict_proba(forest, rng.normal(size=(40, 5)))
        assert np.all(P >= 0)
        assert np.abs(P.sum(axis=1) - 1.0).max() <= 1e-9

    def test_xor_memorized(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1, 1, 0])
        forest = train(X, y, TrainConfig(n_trees=50, seed=6, features_per_split=2), CLASSIFICATION)
        P = predict_proba(forest, X)
        assert (np.argmax(P, axis=1) == y).all()

    def test_linearly_separable(self):
        rng = np.random.default_rng(8)
        X0 = rng.normal(loc=-2.0, size=(50, 2))
        X1 = rng.normal(loc=2.0, size=(50, 2))
        X = np.vstack([X0, X1])
        y = np.repeat([0, 1], 50)
        forest = train(X, y, TrainConfig(n_trees=30, seed=9, min_leaf=5), CLASSIFICATION)
        Xt = np.vstack([rng.normal(loc=-2.0, size=(20, 2)), rng.normal(loc=2.0, size=(20, 2))])
        yt = np.repeat([0, 1], 20)
        preds = np.argmax(predict_proba(forest, Xt), axis=1)
        assert (preds == yt).all()

    def test_string_labels_align_with_classes(self):
        rng = np.random.default_rng(10)
        X = np.vstack([rng.normal(-3, 1, (30, 2)), rng.normal(3, 1, (30, 2))])
        y = np.array(["same"] * 30 + ["notsame"] * 30)
        forest = train(X, y, TrainConfig(n_trees=10, seed=0, min_leaf=3), CLASSIFICATION)
        p = predict_proba(forest, np.array([-3.0, -3.0]))
        assert list(forest.classes) == ["notsame", "same"]
        assert p[1] > 0.9


class TestDeterminism:
    def test_identical_seed_identical_forest(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(80, 6))
        y = rng.uniform(size=80)
        cfg = TrainConfig(n_trees=12, seed=42)
        f1 = train(X, y, cfg)
        f2 = train(X, y, cfg)
        for t1, t2 in zip(f1.trees, f2.trees):
            assert (t1.feature == t2.feature).all()
            assert (t1.threshold == t2.threshold).all()
            assert (t1.value == t2.value).all()
        Xt = rng.normal(size=(30, 6))
        assert (predict_regression(f1, Xt) == predict_regression(f2, Xt)).all()

    def test_different_seed_differs(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(80, 6))
        y = rng.uniform(size=80)
        f1 = train(X, y, TrainConfig(n_trees=5, seed=1))
        f2 = train(X, y, TrainConfig(n_trees=5, seed=2))
        Xt = rng.normal(size=(50, 6))
        assert not np.allclose(predict_regression(f1, Xt), predict_regression(f2, Xt))

    def test_duplicated_constant_rows_do_not_change_fit(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(20, 3))
        y = np.full(20, 0.7)
        f1 = train(X, y, TrainConfig(n_trees=5, seed=3))
        f2 = train(np.vstack([X, X[:5]]), np.concatenate([y, y[:5]]), TrainConfig(n_trees=5, seed=3))
        Xt = rng.normal(size=(10, 3))
        assert (predict_regression(f1, Xt) == predict_regression(f2, Xt)).all()
