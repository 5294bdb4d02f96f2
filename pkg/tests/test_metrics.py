from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectstack.metrics import (
    UndefinedMetricError,
    evaluate,
    evaluate_group,
    ma_pearson,
    pearson,
    pearson_high,
    quadratic_weighted_kappa,
    se_subset,
)
from affectstack.tasks import EMOTIONS, ORDINAL, REGRESSION, TaskSpec

from oracles import cohen_unweighted, kappa_direct, pearson_direct

DATA = Path(__file__).parent / "data"


# -- pearson ---------------------------------------------------------------------


@pytest.mark.parametrize("a, b, r", [
    ([1, 2, 3], [1, 2, 3], 1.0),
    ([1, 2, 3], [3, 2, 1], -1.0),
    ([1, 2, 3, 4], [1, 3, 2, 4], 0.8),
])
def test_pearson_examples(a, b, r):
    assert pearson(a, b) == pytest.approx(r, abs=1e-15)


@pytest.mark.parametrize("a, b", [([1, 1, 1], [1, 2, 3]), ([1, 2, 3], [5, 5, 5]), ([1], [2])])
def test_pearson_undefined(a, b):
    with pytest.raises(UndefinedMetricError):
        pearson(a, b)


def test_pearson_length_mismatch():
    with pytest.raises(ValueError):
        pearson([1, 2, 3], [1, 2])


def test_pearson_agrees_with_direct_formula():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        a, b = rng.normal(size=n), rng.normal(size=n)
        assert abs(pearson(a, b) - pearson_direct(list(a), list(b))) < 1e-12


_vec = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=30)


@settings(max_examples=200, deadline=None)
@given(_vec, st.floats(0.1, 10), st.floats(-50, 50), st.integers(0, 2**31))
def test_pearson_symmetry_and_affine_invariance(a, scale, shift, seed):
    a = np.array(a)
    b = a * np.random.default_rng(seed).uniform(0.5, 1.5, size=a.shape[0]) + 1.0
    try:
        r = pearson(a, b)
    except UndefinedMetricError:
        return
    if np.ptp(a) < 1e-3 or np.ptp(b) < 1e-3:
        return
    assert abs(pearson(b, a) - r) < 1e-12
    assert abs(pearson(scale * a + shift, b) - r) < 1e-9
    assert -1.0 <= r <= 1.0


def test_ma_pearson_is_plain_mean():
    rng = np.random.default_rng(1)
    pairs = {e: (rng.normal(size=20), rng.normal(size=20)) for e in EMOTIONS}
    expect = np.mean([pearson(*pairs[e]) for e in EMOTIONS])
    assert ma_pearson(pairs) == pytest.approx(expect, abs=1e-15)
    perfect = {e: ([1, 2, 3], [1, 2, 3]) for e in EMOTIONS}
    assert ma_pearson(perfect) == pytest.approx(1.0)


def test_ma_pearson_names_undefined_emotion():
    pairs = {e: ([1, 2, 3], [1, 2, 3]) for e in EMOTIONS}
    pairs["fear"] = ([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedMetricError, match="fear"):
        ma_pearson(pairs)
    with pytest.raises(ValueError):
        ma_pearson({"anger": ([1, 2], [1, 2])})


def test_pearson_high_subset():
    gold = np.array([0.4, 0.6, 0.7, 0.9])
    pred = np.array([0.9, 0.1, 0.5, 0.8])
    r, size = pearson_high(pred, gold)
    assert size == 3
    assert r == pytest.approx(pearson(pred[1:], gold[1:]))
    full = np.array([0.5, 0.6, 0.8])
    assert pearson_high([1, 2, 4], full)[0] == pytest.approx(pearson([1, 2, 4], full))
    with pytest.raises(UndefinedMetricError):
        pearson_high([1, 2], [0.1, 0.2])


# -- kappa ------------------------------------------------------------------------


def test_kappa_spot_values():
    assert quadratic_weighted_kappa([0, 1, 2, 3], [0, 1, 2, 3], 4) == 1.0
    assert quadratic_weighted_kappa([2, 1, 0], [0, 1, 2], 3) == pytest.approx(-1.0, abs=1e-15)
    assert quadratic_weighted_kappa([1, 1, 1], [1, 1, 1], 4) == 1.0


def test_kappa_single_class_each_side():
    # marginals on different classes: E is off-diagonal, so the ratio is defined
    assert quadratic_weighted_kappa([0, 0, 0], [2, 2, 2], 3) == pytest.approx(0.0, abs=1e-15)
    assert kappa_direct([0, 0, 0], [2, 2, 2], 3) == pytest.approx(0.0, abs=1e-15)


def test_kappa_agrees_with_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        K = int(rng.integers(2, 8))
        n = int(rng.integers(1, 51))
        gold = rng.integers(0, K, size=n)
        pred = np.where(rng.random(n) < 0.5, gold, rng.integers(0, K, size=n))
        oracle = kappa_direct(list(pred), list(gold), K)
        try:
            got = quadratic_weighted_kappa(pred, gold, K)
        except UndefinedMetricError:
            assert np.isnan(oracle)
            continue
        assert abs(got - oracle) < 1e-12


def test_binary_quadratic_kappa_is_cohen():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(2, 40))
        gold = rng.integers(0, 2, size=n)
        pred = np.where(rng.random(n) < 0.6, gold, 1 - gold)
        try:
            got = quadratic_weighted_kappa(pred, gold, 2)
        except UndefinedMetricError:
            continue
        assert abs(got - cohen_unweighted(list(pred), list(gold))) < 1e-12
        checked += 1
    assert checked >= 90


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 7), st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)),
                                   min_size=1, max_size=40))
def test_kappa_invariant_under_reversed_labels(K, pairs):
    pred = np.array([p % K for p, _ in pairs])
    gold = np.array([g % K for _, g in pairs])
    try:
        k = quadratic_weighted_kappa(pred, gold, K)
    except UndefinedMetricError:
        return
    assert abs(quadratic_weighted_kappa(K - 1 - pred, K - 1 - gold, K) - k) < 1e-12


def test_kappa_input_validation():
    with pytest.raises(ValueError):
        quadratic_weighted_kappa([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        quadratic_weighted_kappa([0, 1], [0, 1, 1], 3)
    with pytest.raises(ValueError):
        quadratic_weighted_kappa([0.5, 1], [0, 1], 3)


# -- some-emotion subset ------------------------------------------------------------


def test_se_subset_examples():
    emo = TaskSpec(ORDINAL, "joy")
    p, g = se_subset(np.array([3, 2, 1, 0]), np.array([0, 1, 2, 3]), emo)
    np.testing.assert_array_equal(g, [1, 2, 3])
    np.testing.assert_array_equal(p, [2, 1, 0])
    p, g = se_subset(np.array([1, 1]), np.array([0, 0]), emo)
    assert g.size == 0
    val = TaskSpec(ORDINAL, "valence")
    p, g = se_subset(np.array([-1, 0, 1]), np.array([-3, 0, 2]), val)
    np.testing.assert_array_equal(g, [-3, 2])
    np.testing.assert_array_equal(p, [-1, 1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), max_size=30))
def test_se_subset_idempotent(pairs):
    task = TaskSpec(ORDINAL, "valence")
    pred = np.array([p for p, _ in pairs], dtype=int)
    gold = np.array([g for _, g in pairs], dtype=int)
    once = se_subset(pred, gold, task)
    twice = se_subset(*once, task)
    np.testing.assert_array_equal(once[0], twice[0])
    np.testing.assert_array_equal(once[1], twice[1])


# -- reports --------------------------------------------------------------------------


def test_regression_report_fields():
    rep = evaluate([0.1, 0.5, 0.7, 0.9], [0.2, 0.4, 0.8, 0.6], TaskSpec(REGRESSION, "anger"))
    assert rep.pearson is not None and rep.pearson_high is not None
    assert rep.kappa is None and rep.pearson_se is None
    assert rep.subset_sizes == {"high": 2}


def test_ordinal_report_fields():
    task = TaskSpec(ORDINAL, "valence")
    rep = evaluate([-3, -1, 0, 2, 3, 1], [-2, -1, 0, 3, 3, 0], task)
    for name in ("pearson", "kappa", "pearson_se", "kappa_se"):
        assert getattr(rep, name) is not None
    assert rep.subset_sizes == {"se": 4}
    assert rep.kappa == pytest.approx(
        kappa_direct([0, 2, 3, 5, 6, 4], [1, 2, 3, 6, 6, 3], 7), abs=1e-12
    )


def test_undefined_metrics_are_explicit_nulls():
    rep = evaluate([1, 1, 1], [0, 0, 0], TaskSpec(ORDINAL, "fear"))
    assert rep.pearson is None and "constant" in rep.undefined["pearson"]
    assert rep.kappa_se is None and rep.has_undefined()
    text = rep.to_text()
    assert "pearson\tnull\t" in text and "kappa_se\tnull\t" in text


def test_report_text_golden():
    task = TaskSpec(ORDINAL, "valence")
    rep = evaluate([-3, -1, 0, 2, 3, 1, 0], [-2, -1, 0, 3, 3, 0, 0], task)
    assert rep.to_text() == (DATA / "report_v_oc.txt").read_text()


def test_group_report():
    rng = np.random.default_rng(4)
    pairs = {}
    for e in EMOTIONS:
        g = rng.uniform(size=30)
        pairs[e] = (g + 0.2 * rng.normal(size=30), g)
    grp = evaluate_group(pairs, REGRESSION)
    assert grp.ma_pearson == pytest.approx(ma_pearson(pairs), abs=1e-15)
    assert all(grp.reports[e].ma_pearson == grp.ma_pearson for e in EMOTIONS)
    text = grp.to_text()
    assert text.startswith("task\tEI-reg\nma_pearson\t")
    assert "sadness.pearson_high\t" in text


def test_group_report_with_undefined_member():
    pairs = {e: ([0, 1, 2, 3], [0, 1, 3, 2]) for e in EMOTIONS}
    pairs["joy"] = ([1, 1, 1, 1], [0, 1, 3, 2])
    grp = evaluate_group(pairs, ORDINAL)
    assert grp.ma_pearson is None and "joy" in grp.undefined["pearson"]
    assert grp.macro["kappa"] is not None
