import numpy as np
import pytest

from oracles import best_split, sse_exact
from uiforecast.rf import ForestConfig, fit_forest, fit_tree, predict_forest, predict_tree

EXACT = ForestConfig(n_trees=1, min_node_size=1, mtry="all", bootstrap=False)


def test_constant_target_gives_single_leaf():
    X = np.random.default_rng(0).normal(size=(20, 3))
    tree = fit_tree(X, np.full(20, 3.0), EXACT)
    assert tree.n_nodes == 1
    assert predict_tree(tree, X[0]) == 3.0
    assert predict_tree(tree, np.array([100.0, -5.0, 0.0])) == 3.0


def test_step_function_example():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    tree = fit_tree(X, np.array([0.0, 0.0, 10.0, 10.0]), EXACT)
    assert tree.feature[0] == 0
    assert 1.0 <= tree.threshold[0] < 2.0
    assert predict_tree(tree, np.array([0.5])) == 0.0
    assert predict_tree(tree, np.array([2.5])) == 10.0


def test_single_row_is_leaf():
    tree = fit_tree(np.array([[4.0, 2.0]]), np.array([7.5]), EXACT)
    assert tree.n_nodes == 1 and tree.value[0] == 7.5


def test_constant_features_cannot_split():
    tree = fit_tree(np.ones((6, 2)), np.arange(6.0), EXACT)
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(2.5)


def test_min_node_size_bounds_children():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 2))
    y = rng.normal(size=200)
    tree = fit_tree(X, y, ForestConfig(min_node_size=7, mtry="all"))
    leaves = tree.leaves(X)
    assert np.bincount(leaves)[np.unique(leaves)].min() >= 7


def test_root_split_matches_exhaustive_search():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n, d = rng.integers(2, 10), rng.integers(1, 4)
        X = rng.integers(0, 4, size=(n, d)).astype(float)
        y = rng.normal(size=n)
        tree = fit_tree(X, y, EXACT)
        best, f, thr, _ = best_split(X, y)
        if f is None:
            assert tree.n_nodes == 1
            continue
        left = X[:, tree.feature[0]] <= tree.threshold[0]
        assert sse_exact(y[left]) + sse_exact(y[~left]) == best
        assert (tree.feature[0], tree.threshold[0]) == (f, thr)


def test_split_ties_go_to_lowest_feature():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    tree = fit_tree(X, np.array([0.0, 0.0, 1.0, 1.0]), EXACT)
    assert tree.feature[0] == 0 and tree.threshold[0] == 0.5


def test_empty_or_bad_input():
    with pytest.raises(ValueError):
        fit_tree(np.empty((0, 2)), np.empty(0), EXACT)
    with pytest.raises(ValueError):
        fit_tree(np.ones((3, 2)), np.ones(4), EXACT)
    tree = fit_tree(np.ones((3, 2)), np.ones(3), EXACT)
    with pytest.raises(ValueError):
        tree.predict(np.ones((1, 3)))


def test_unbootstrapped_single_tree_forest_equals_tree():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 3))
    y = X[:, 0] ** 2 + rng.normal(size=60)
    cfg = ForestConfig(n_trees=1, bootstrap=False, seed=9, mtry=1)
    forest = fit_forest(X, y, cfg)
    tree = fit_tree(X, y, cfg)
    np.testing.assert_array_equal(forest.predict(X), tree.predict(X))
    assert predict_forest(forest, X[0]) == predict_tree(tree, X[0])


def test_identical_trees_without_bootstrap():
    X = np.arange(10.0)[:, None]
    y = (X[:, 0] > 4).astype(float)
    forest = fit_forest(X, y, ForestConfig(n_trees=7, bootstrap=False, min_node_size=1))
    single = fit_tree(X, y, EXACT)
    np.testing.assert_array_equal(forest.predict(X), single.predict(X))


def test_forest_is_mean_of_trees():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 4))
    y = rng.normal(size=80)
    forest = fit_forest(X, y, ForestConfig(n_trees=5, seed=1))
    per_tree = np.array([t.predict(X) for t in forest.trees])
    np.testing.assert_allclose(forest.predict(X), per_tree.mean(axis=0), rtol=1e-12)


def test_constant_target_forest():
    X = np.random.default_rng(0).normal(size=(30, 2))
    forest = fit_forest(X, np.full(30, -1.25), ForestConfig(n_trees=4))
    assert np.all(forest.predict(X) == -1.25)


def test_forest_determinism():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(100, 3))
    y = rng.normal(size=100)
    a = fit_forest(X, y, ForestConfig(n_trees=6, seed=42))
    b = fit_forest(X, y, ForestConfig(n_trees=6, seed=42))
    for k, v in a.to_arrays().items():
        np.testing.assert_array_equal(v, b.to_arrays()[k])
    c = fit_forest(X, y, ForestConfig(n_trees=6, seed=43))
    assert not np.array_equal(a.predict(X), c.predict(X))


def test_oob_predictions_skip_inbag_trees():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 2))
    y = rng.normal(size=50)
    forest = fit_forest(X, y, ForestConfig(n_trees=8, seed=3))
    oob = forest.predict_oob(X)
    trees = forest.trees
    for i in range(10):
        outs = [t.predict(X[i])[0] for b, t in enumerate(trees) if not forest.inbag[b, i]]
        if outs:
            assert oob[i] == pytest.approx(np.mean(outs), rel=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        ForestConfig(mtry="some")
    with pytest.raises(ValueError):
        ForestConfig(mtry=5).resolve_mtry(3)
    assert ForestConfig().resolve_mtry(7) == 2
