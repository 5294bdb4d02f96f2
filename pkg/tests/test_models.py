import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectstack.models import (
    CLASSIFICATION,
    GRADIENT_BOOSTED,
    RANDOM_FOREST,
    REGRESSION,
    RIDGE,
    CorruptModelError,
    HyperParams,
    ModelVersionError,
    OptConfig,
    OrdinalThresholdModel,
    RidgeModel,
    Tree,
    TreeEnsembleModel,
    build_tree,
    find_best_split,
    forest_fit,
    gbt_fit,
    load_model,
    model_predict,
    ordinal_fit,
    ordinal_objective,
    ordinal_predict,
    ridge_fit,
    ridge_objective,
    ridge_predict,
    save_model,
)
from affectstack.models.io import dumps_model, loads_model, model_to_dict

from oracles import all_threshold_objective, brute_force_split, central_difference, scalar_min


def friedman(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 5))
    y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4] + rng.normal(size=n))
    return X, y


# -- ridge ---------------------------------------------------------------------


def test_ridge_exact_fit():
    m = ridge_fit(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 4.0, 6.0]), 0.0)
    assert m.weights[0] == pytest.approx(2.0, abs=1e-12)
    assert m.intercept == pytest.approx(0.0, abs=1e-12)
    assert ridge_predict(m, np.array([[4.0]]))[0] == pytest.approx(8.0, abs=1e-12)


def test_ridge_matches_scalar_minimizer():
    X, y = np.array([[1.0], [2.0]]), np.array([1.0, 3.0])

    def profile(w):  # intercept profiled out: b = mean(y - w x)
        b = np.mean(y - w * X[:, 0])
        return ridge_objective(X, y, np.array([w]), b, 1.0)

    w_star = scalar_min(profile, -5.0, 5.0)
    m = ridge_fit(X, y, 1.0)
    assert m.weights[0] == pytest.approx(w_star, abs=1e-6)
    assert m.weights[0] == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert m.intercept == pytest.approx(np.mean(y - m.weights[0] * X[:, 0]), abs=1e-12)


def test_ridge_infinite_shrinkage():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(30, 4)), rng.normal(size=30)
    m = ridge_fit(X, y, 1e9)
    assert np.all(np.abs(m.weights) < 1e-6)
    assert np.all(np.abs(m.predict(X) - y.mean()) < 1e-3)


@pytest.mark.parametrize("n, d, lam", [(40, 5, 0.5), (10, 25, 2.0), (50, 3, 0.0)])
def test_ridge_first_order_optimality(n, d, lam):
    rng = np.random.default_rng(n + d)
    X, y = rng.normal(size=(n, d)), rng.normal(size=n)
    m = ridge_fit(X, y, lam)
    base = ridge_objective(X, y, m.weights, m.intercept, lam)
    eps = 1e-4
    for k in range(d + 1):
        for sign in (1, -1):
            w, b = m.weights.copy(), m.intercept
            if k < d:
                w[k] += sign * eps
            else:
                b += sign * eps
            assert ridge_objective(X, y, w, b, lam) >= base - 1e-8


def test_ridge_dual_matches_primal_normal_equations():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(8, 20)), rng.normal(size=8)
    m = ridge_fit(X, y, 0.7)
    Xc, yc = X - X.mean(0), y - y.mean()
    w = np.linalg.solve(Xc.T @ Xc + 0.7 * np.eye(20), Xc.T @ yc)
    np.testing.assert_allclose(m.weights, w, atol=1e-10)


def test_ridge_min_norm_on_duplicate_columns():
    x = np.arange(6.0)
    m = ridge_fit(np.column_stack([x, x]), 2 * x + 1, 0.0)
    np.testing.assert_allclose(m.weights, [1.0, 1.0], atol=1e-10)
    assert m.intercept == pytest.approx(1.0)


def test_ridge_predict_trivia_and_errors():
    m = RidgeModel(np.zeros(3), 0.5, 1.0)
    np.testing.assert_array_equal(m.predict(np.ones((4, 3))), np.full(4, 0.5))
    ident = RidgeModel(np.array([1.0]), 0.0, 0.0)
    np.testing.assert_array_equal(ident.predict(np.array([[1.5], [-2.0]])), [1.5, -2.0])
    with pytest.raises(ValueError):
        m.predict(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ridge_fit(np.ones((3, 1)), np.ones(3), -1.0)


# -- ordinal --------------------------------------------------------------------


@pytest.mark.parametrize("loss_kind", ["logistic", "squared"])
def test_objective_matches_literal_double_sum(loss_kind):
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(12, 3)), rng.integers(0, 5, size=12)
    w, theta = rng.normal(size=3), np.sort(rng.normal(size=4))
    val, _, _ = ordinal_objective(w, theta, X, y, 5, loss_kind, 0.3)
    assert val == pytest.approx(all_threshold_objective(w, theta, X, y, loss_kind, 0.3),
                                rel=1e-12)


def gradient_check(seed, loss_kind):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 8))
    d = int(rng.integers(1, 6))
    X, y = rng.normal(size=(20, d)), rng.integers(0, K, size=20)
    lam = float(rng.uniform(0, 2))
    p = np.r_[rng.normal(size=d), np.sort(rng.normal(size=K - 1))]

    def f(q):
        return ordinal_objective(q[:d], q[d:], X, y, K, loss_kind, lam)[0]

    _, gw, gt = ordinal_objective(p[:d], p[d:], X, y, K, loss_kind, lam)
    g = np.r_[gw, gt]
    fd = central_difference(f, p)
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12))


@pytest.mark.parametrize("loss_kind", ["logistic", "squared"])
def test_gradient_matches_finite_differences(loss_kind):
    errs = [gradient_check(s, loss_kind) for s in range(100)]
    assert max(errs) < 1e-5


def separable_1d(n=300, K=4, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, K, size=n)
    x = 3.0 * y + rng.uniform(-1.0, 1.0, size=n)
    return x[:, None], y


@pytest.mark.parametrize("loss_kind", ["logistic", "squared"])
def test_separable_four_classes(loss_kind):
    X, y = separable_1d()
    m = ordinal_fit(X, y, 4, loss_kind, lam=0.1)
    assert m.converged
    assert np.array_equal(m.predict(X), y)
    grid = np.linspace(-5, 15, 500)[:, None]
    assert np.all(np.diff(m.predict(grid)) >= 0)


def test_three_clusters_bracketed():
    X = np.repeat([-10.0, 0.0, 10.0], 5)[:, None]
    y = np.repeat([0, 1, 2], 5)
    m = ordinal_fit(X, y, 3, "squared", 1.0)
    assert np.array_equal(m.predict(X), y)
    s = m.weights[0] * np.array([-10.0, 0.0, 10.0])
    assert s[0] <= m.thresholds[0] < s[1] <= m.thresholds[1] < s[2]


def test_single_label_rejected():
    with pytest.raises(ValueError):
        ordinal_fit(np.ones((4, 1)), np.zeros(4, dtype=int), 3)


def test_labels_out_of_range_rejected():
    with pytest.raises(ValueError):
        ordinal_fit(np.ones((3, 1)), np.array([0, 1, 3]), 3)


def test_two_classes_reduce_to_linear_classifier():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 3))
    y = (X @ [1.0, -1.0, 0.5] + 0.3 * rng.normal(size=80) > 0).astype(int)
    m = ordinal_fit(X, y, 2, "logistic", 0.5)
    np.testing.assert_array_equal(m.predict(X), (X @ m.weights > m.thresholds[0]).astype(int))


def test_prediction_threshold_rule():
    m = OrdinalThresholdModel(np.array([1.0]), np.array([-1.0, 0.0, 2.0]), 4, "squared", 1.0)
    assert ordinal_predict(m, np.array([-5.0])) == 0
    assert ordinal_predict(m, np.array([5.0])) == 3
    assert ordinal_predict(m, np.array([0.0])) == 1  # equal to a threshold: lower class
    assert ordinal_predict(m, np.array([2.0])) == 2
    with pytest.raises(ValueError):
        ordinal_predict(m, np.array([1.0, 2.0]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.integers(0, 10**6))
def test_prediction_monotone_in_score(thresholds, seed):
    theta = np.sort(np.array(thresholds))
    m = OrdinalThresholdModel(np.array([1.0]), theta, len(theta) + 1, "squared", 1.0)
    u = np.sort(np.random.default_rng(seed).uniform(-7, 7, size=50))
    assert np.all(np.diff(m.predict(u[:, None])) >= 0)


def test_thresholds_must_be_ordered():
    with pytest.raises(ValueError):
        OrdinalThresholdModel(np.zeros(1), np.array([1.0, 0.0]), 3, "squared", 1.0)


@pytest.mark.parametrize("loss_kind", ["logistic", "squared"])
def test_objective_never_increases(loss_kind):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(150, 4)) + 3.0
    y = np.clip(np.round(X[:, 0] - 3 + rng.normal(size=150)) + 2, 0, 4).astype(int)
    trace = []
    m = ordinal_fit(X, y, 5, loss_kind, 0.5, trace=trace)
    assert m.converged
    assert np.all(np.diff(trace) <= 0)
    assert np.all(np.diff(m.thresholds) >= 0)


def test_iteration_cap_flags_non_convergence():
    X, y = separable_1d(60)
    m = ordinal_fit(X, y, 4, "squared", 0.01, opt=OptConfig(max_iter=3))
    assert not m.converged and m.n_iter == 3


def test_fitted_optimum_is_stationary():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(100, 3))
    y = np.clip(np.round(X[:, 0] + 1.5), 0, 3).astype(int)
    m = ordinal_fit(X, y, 4, "logistic", 1.0)
    _, gw, gt = ordinal_objective(m.weights, m.thresholds, X, y, 4, "logistic", 1.0)
    assert np.linalg.norm(gw) < 1e-4 and np.linalg.norm(gt) < 1e-4


# -- trees -----------------------------------------------------------------------


def test_depth_one_split_matches_exhaustive_search():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        X = rng.normal(size=(n, 2))
        if rng.random() < 0.3:
            X = np.round(X)  # repeated values
        y = rng.normal(size=n)
        expect = brute_force_split(X, y)
        tree = build_tree(X, y[:, None], max_depth=1)
        if expect is None:
            assert tree.n_nodes == 1
            continue
        assert tree.feature[0] == expect[0]
        assert tree.threshold[0] == pytest.approx(expect[1], abs=1e-12)


def test_split_tie_prefers_lowest_feature_then_threshold():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0.0, 1.0, 1.0, 0.0])
    f, t, _ = find_best_split(X, y[:, None])
    assert (f, t) == (0, 0.5)


def test_constant_target_gives_constant_forest():
    X = np.random.default_rng(0).normal(size=(40, 3))
    m = forest_fit(X, np.full(40, 0.3), HyperParams(RANDOM_FOREST, n_trees=5))
    np.testing.assert_allclose(m.predict(np.random.default_rng(1).normal(size=(9, 3))), 0.3)


def test_forest_separable_classification():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    y = (X[:, 0] > 0).astype(int)
    m = forest_fit(X, y, HyperParams(RANDOM_FOREST, n_trees=10, max_depth=1),
                   CLASSIFICATION, seed=3)
    assert np.mean(m.predict(X) == y) >= 0.95


def test_forest_respects_depth_and_feature_range():
    X, y = friedman(120, 2)
    m = forest_fit(X, y, HyperParams(RANDOM_FOREST, n_trees=4, max_depth=3, feature_fraction=0.4))
    for tree in m.trees:
        assert tree.depth() <= 3
        assert tree.feature.max() < 5


@pytest.mark.parametrize("params", [
    HyperParams(RANDOM_FOREST, n_trees=8, max_depth=4, feature_fraction=0.6),
    HyperParams(GRADIENT_BOOSTED, n_trees=8, max_depth=3, feature_fraction=0.6),
])
def test_tree_ensembles_are_seed_deterministic(params):
    X, y = friedman(150, 0)
    fit = forest_fit if params.family == RANDOM_FOREST else gbt_fit
    a, b, c = fit(X, y, params, seed=5), fit(X, y, params, seed=5), fit(X, y, params, seed=6)
    assert dumps_model(a) == dumps_model(b)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    assert dumps_model(a) != dumps_model(c)


def test_single_full_tree_interpolates():
    X, y = friedman(60, 1)
    m = gbt_fit(X, y, HyperParams(GRADIENT_BOOSTED, n_trees=1, learning_rate=1.0))
    np.testing.assert_allclose(m.predict(X), y, atol=1e-9)


def test_zero_learning_rate_predicts_mean():
    X, y = friedman(60, 1)
    m = gbt_fit(X, y, HyperParams(GRADIENT_BOOSTED, n_trees=5, max_depth=2, learning_rate=0.0))
    np.testing.assert_allclose(m.predict(X), y.mean())


def test_boosting_training_error_never_increases():
    X, y = friedman(300, 4)
    staged = []
    gbt_fit(X, y, HyperParams(GRADIENT_BOOSTED, n_trees=60, max_depth=3, learning_rate=0.3),
            staged=staged)
    mse = [float(np.mean((y - p) ** 2)) for p in staged]
    assert np.all(np.diff(mse) <= 1e-12)


def leaf(value):
    return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                np.atleast_2d(np.asarray(value, dtype=np.float64)))


def test_single_leaf_predicts_its_value():
    m = TreeEnsembleModel(RANDOM_FOREST, REGRESSION, (leaf([0.7]),), n_features=2)
    np.testing.assert_array_equal(model_predict(m, np.zeros((3, 2))), [0.7] * 3)


def test_vote_tie_goes_to_lower_class():
    trees = (leaf([0, 1, 0]), leaf([0, 0, 1]))
    m = TreeEnsembleModel(RANDOM_FOREST, CLASSIFICATION, trees, n_features=1, n_classes=3)
    assert model_predict(m, np.zeros((1, 1)))[0] == 1


def test_ensemble_invariants():
    with pytest.raises(ValueError):
        TreeEnsembleModel(RANDOM_FOREST, REGRESSION, (), n_features=1)
    split = Tree(np.array([3, -1, -1]), np.array([0.0, 0, 0]), np.array([1, -1, -1]),
                 np.array([2, -1, -1]), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        TreeEnsembleModel(RANDOM_FOREST, REGRESSION, (split,), n_features=2)
    with pytest.raises(ValueError):
        TreeEnsembleModel(RANDOM_FOREST, REGRESSION, (split,), n_features=5, max_depth=0)


def test_tree_predict_dimension_mismatch():
    m = TreeEnsembleModel(RANDOM_FOREST, REGRESSION, (leaf([1.0]),), n_features=2)
    with pytest.raises(ValueError):
        m.predict(np.zeros((1, 3)))


# -- hyper-parameters -----------------------------------------------------------------


def test_hyperparams_validation_and_roundtrip():
    p = HyperParams(GRADIENT_BOOSTED, n_trees=50, max_depth=3, learning_rate=0.05)
    assert HyperParams.from_dict(p.to_dict()) == p
    assert "lam" not in p.to_dict()
    for bad in ({"n_trees": 0}, {"feature_fraction": 0.0}, {"feature_fraction": 1.5},
                {"lam": -1.0}, {"loss_kind": "hinge"}, {"max_depth": 0}):
        with pytest.raises(ValueError):
            HyperParams(RIDGE, **bad)
    with pytest.raises(ValueError):
        HyperParams.from_dict({"family": RIDGE, "alpha": 1})
    with pytest.raises(ValueError):
        HyperParams("svm")


# -- serialization -----------------------------------------------------------------


def fitted_models():
    X, y = friedman(80, 7)
    yc = np.clip(np.round(y / 6), 0, 3).astype(int)
    return [
        ridge_fit(X, y, 0.3),
        ordinal_fit(X, yc, 4, "logistic", 1.0),
        forest_fit(X, y, HyperParams(RANDOM_FOREST, n_trees=3, max_depth=4)),
        forest_fit(X, yc, HyperParams(RANDOM_FOREST, n_trees=3), CLASSIFICATION, n_classes=4),
        gbt_fit(X, y, HyperParams(GRADIENT_BOOSTED, n_trees=4, max_depth=2)),
    ]


@pytest.mark.parametrize("model", fitted_models(), ids=lambda m: type(m).__name__)
def test_roundtrip_is_bit_identical(model, tmp_path):
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    X = np.random.default_rng(0).normal(size=(50, 5)) * 3
    a, b = model.predict(X), back.predict(X)
    assert a.dtype == b.dtype and a.tobytes() == b.tobytes()
    assert dumps_model(back) == dumps_model(model)


def test_model_header_is_self_describing():
    doc = model_to_dict(fitted_models()[1])
    assert (doc["format"], doc["version"], doc["kind"]) == ("affectstack.model", 1, "ordinal")
    assert (doc["n_features"], doc["n_classes"]) == (5, 4)


def test_truncated_file_is_corrupt(tmp_path):
    text = dumps_model(fitted_models()[0])
    (tmp_path / "m.json").write_text(text[: len(text) // 2])
    with pytest.raises(CorruptModelError):
        load_model(tmp_path / "m.json")


def test_future_version_rejected():
    doc = model_to_dict(fitted_models()[0])
    doc["version"] = 99
    with pytest.raises(ModelVersionError):
        loads_model(json.dumps(doc))


def test_tampered_body_is_corrupt():
    doc = model_to_dict(fitted_models()[0])
    doc["body"]["intercept"] += 1.0
    with pytest.raises(CorruptModelError, match="checksum"):
        loads_model(json.dumps(doc))
