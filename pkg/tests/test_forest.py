import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.tree import DecisionTreeRegressor

from exoshape.estimator import ForestModel, fit_forest, fit_tree, load_forest, predict


def toy(n=600, d=7, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, d))
    y = 20 + 50 * X[:, 0] + 15 * np.sin(6 * X[:, 2]) + rng.normal(0, 2, n)
    return X, y


@pytest.mark.parametrize("depth,leaf", [(1, 1), (3, 5), (10, 5), (6, 20)])
def test_single_tree_matches_sklearn(depth, leaf):
    X, y = toy(1500)
    ours = fit_tree(X, y, depth, leaf)
    ref = DecisionTreeRegressor(max_depth=depth, min_samples_leaf=leaf, random_state=0).fit(X, y)
    Xq = np.random.default_rng(9).uniform(0, 1, (500, 7))
    np.testing.assert_allclose(ours.predict(Xq), ref.predict(Xq), rtol=0, atol=1e-9)
    assert ours.n_nodes == ref.tree_.node_count


def test_unbagged_forest_equals_tree():
    X, y = toy()
    f = fit_forest(X, y, trees=3, depth=4, bootstrap=False)
    t = fit_tree(X, y, 4, 5)
    np.testing.assert_allclose(f.predict(X), t.predict(X), rtol=1e-14)


def test_constant_target():
    X, _ = toy(200)
    f = fit_forest(X, np.full(200, 42.0), trees=5)
    assert np.all(f.predict(X) == 42.0)
    assert all(t.n_nodes == 1 for t in f.trees)


def test_stump_separates_two_levels():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, (400, 7))
    y = np.where(X[:, 3] > 0.5, 90.0, 10.0)
    f = fit_forest(X, y, trees=10, depth=1, min_leaf=1, seed=4)
    # bootstrap thresholds wander slightly, so skip points at the boundary
    far = np.abs(X[:, 3] - 0.5) > 0.02
    assert np.all(np.abs(f.predict(X[far]) - y[far]) < 5.0)
    assert all(t.feature[0] == 3 for t in f.trees)


def test_depth_and_leaf_limits():
    X, y = toy(800)
    f = fit_forest(X, y, trees=4, depth=5, min_leaf=12)
    for t in f.trees:
        assert t.depth <= 5
        assert t.count[t.leaves()].min() >= 12


def test_same_seed_same_bytes(tmp_path):
    X, y = toy()
    a, b = fit_forest(X, y, trees=6, seed=11), fit_forest(X, y, trees=6, seed=11)
    a.save(tmp_path / "a.txt")
    b.save(tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    c = fit_forest(X, y, trees=6, seed=12)
    assert not np.array_equal(a.predict(X), c.predict(X))


def test_save_load_bit_exact(tmp_path):
    X, y = toy()
    f = fit_forest(X, y, trees=8, seed=3)
    f.save(tmp_path / "m" / "model.txt")
    g = load_forest(tmp_path / "m" / "model.txt")
    np.testing.assert_array_equal(g.predict(X), f.predict(X))
    assert (g.max_depth, g.min_leaf, g.seed, g.feature_names, g.y_range) == (
        f.max_depth, f.min_leaf, f.seed, f.feature_names, f.y_range)


@pytest.mark.parametrize("text", ["", "other-format 1\n", "exoshape-forest 2\n", "exoshape-forest 1\nn_trees x\n"])
def test_malformed_model(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text, encoding="utf-8")
    with pytest.raises(ValueError):
        load_forest(p)


def test_dimension_mismatch():
    X, y = toy()
    f = fit_forest(X, y, trees=2)
    with pytest.raises(ValueError, match="7 features"):
        f.predict(np.zeros((3, 6)))
    assert np.ndim(predict(f, X[0])) == 0


@pytest.mark.parametrize("kwargs", [dict(trees=0), dict(depth=-1), dict(min_leaf=0)])
def test_bad_hyperparameters(kwargs):
    X, y = toy()
    with pytest.raises(ValueError):
        fit_forest(X, y, **kwargs)


def test_bad_training_data():
    X, y = toy()
    with pytest.raises(ValueError):
        fit_forest(X[:40], y[:40])
    X[5, 2] = np.nan
    with pytest.raises(ValueError):
        fit_forest(X, y)
    with pytest.raises(ValueError):
        fit_forest(X[:, :3], y[:-1])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-3, 3), min_size=7, max_size=7))
def test_prediction_within_target_range(seed, q):
    X, y = toy(120, seed=seed % 50)
    f = fit_forest(X, y, trees=3, depth=4, seed=seed)
    p = f.predict(np.array(q))
    assert y.min() <= p <= y.max()


def test_tree_order_invariant():
    X, y = toy()
    f = fit_forest(X, y, trees=7, seed=5)
    g = ForestModel(f.trees[::-1], f.max_depth, f.min_leaf, f.seed, f.feature_names, f.y_range)
    np.testing.assert_allclose(g.predict(X), f.predict(X), rtol=1e-13)


def test_duplicated_column_leaves_structure():
    # gain ties go to the lower index, so an appended copy is never chosen
    X, y = toy(500, d=4)
    a = fit_tree(X, y, 6, 5)
    b = fit_tree(np.column_stack([X, X[:, 0]]), y, 6, 5)
    np.testing.assert_array_equal(a.feature, b.feature)
    np.testing.assert_array_equal(a.threshold, b.threshold)
