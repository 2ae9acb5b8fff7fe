import numpy as np
import pytest
from sklearn.base import clone

from survrulefit.ctree import (
    CTreeConfig,
    CTreeRuleEnsemble,
    best_cutpoint,
    boost_rules,
    fit_ctree,
    permutation_test,
)
from survrulefit.rules import Condition, Rule


@pytest.fixture(scope="module")
def binary_X():
    rng = np.random.default_rng(5)
    return rng.integers(0, 2, size=(300, 4)).astype(float)


def test_constant_response_gives_root_only(binary_X):
    tree = fit_ctree(binary_X, np.ones(300), np.ones(300), CTreeConfig())
    assert tree.root.is_leaf
    assert tree.rules() == []


def test_perfect_association_splits_on_that_covariate(binary_X):
    tree = fit_ctree(binary_X, binary_X[:, 0].copy(), np.ones(300), CTreeConfig())
    assert tree.root.feature == 0


def test_depth_one_rules_before_dedup():
    # column 0 plays bmi (1 = high)
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.integers(0, 2, 400), rng.normal(50, 10, 400)])
    y = 2.0 * X[:, 0] + rng.normal(0, 0.1, 400)
    cfg = CTreeConfig(max_depth=1, max_trees=1, subsample_fraction=1.0)
    res = boost_rules(X, y, np.ones(400), cfg, seed=0, binary_mask=np.array([True, False]))
    assert set(res.rules) == {Rule((Condition(0, "==", 1),)), Rule((Condition(0, "==", 0),))}


def test_depth_two_branch_gives_conjunction():
    rng = np.random.default_rng(2)
    n = 2000
    bmi = rng.integers(0, 2, n).astype(float)
    age = rng.uniform(20, 70, n)
    y = 3.0 * bmi + 2.0 * bmi * (age > 45) + rng.normal(0, 0.1, n)
    tree = fit_ctree(np.column_stack([bmi, age]), y, np.ones(n), CTreeConfig(max_depth=2), binary_mask=np.array([True, False]))
    assert tree.root.feature == 0
    conj = [r for r in tree.rules() if len(r.conditions) == 2 and Condition(0, "==", 1) in r.conditions]
    assert conj
    thresholds = [c.value for r in conj for c in r.conditions if c.var == 1]
    assert any(abs(t - 45) < 1.0 for t in thresholds)


def test_zero_learning_rate_keeps_initial_fit(binary_X):
    y = binary_X[:, 1] + np.random.default_rng(0).normal(0, 0.2, 300)
    res = boost_rules(binary_X, y, np.ones(300), CTreeConfig(max_trees=5, learn_rate=0.0), seed=1)
    assert res.rules
    assert np.all(res.fitted == res.intercept)


def test_boosting_deterministic(binary_X):
    y = binary_X[:, 1] + np.random.default_rng(0).normal(0, 0.5, 300)
    cfg = CTreeConfig(max_trees=10)
    a = boost_rules(binary_X, y, np.ones(300), cfg, seed=9)
    b = boost_rules(binary_X, y, np.ones(300), cfg, seed=9)
    assert a.rules == b.rules
    np.testing.assert_array_equal(a.fitted, b.fitted)


def test_smallest_p_value_is_one_over_b_plus_one(binary_X):
    res = permutation_test(binary_X, binary_X[:, 2], np.ones(300), 0.05, bonferroni=False, permutations=99, rng=0)
    assert res.p_values[2] == pytest.approx(1 / 100)


def _full_counts(X, y, w, permutations, seed):
    # reference run that never stops early; consumes the stream in the same chunks
    rng = np.random.default_rng(seed)
    u = w * (y - np.dot(w, y) / w.sum())
    xc = X - X.mean(axis=0)
    t_obs = xc.T @ u
    bar = np.abs(t_obs) * (1 - 1e-9) - 1e-12 * np.sqrt(np.einsum("ij,ij->j", xc, xc) * np.dot(u, u))
    counts = np.zeros(X.shape[1], dtype=np.int64)
    done = 0
    while done < permutations:
        b = min(100, permutations - done)
        perm = rng.permuted(np.broadcast_to(u, (b, len(u))), axis=1)
        counts += (np.abs(perm @ xc) >= bar).sum(axis=0)
        done += b
    return counts


@pytest.mark.parametrize("seed", range(8))
def test_early_stop_preserves_decision(seed):
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(80, 5))
    y = 0.25 * seed * X[:, 0] + rng.normal(size=80)
    w = np.ones(80)
    alpha = 0.05
    res = permutation_test(X, y, w, alpha, True, 999, np.random.default_rng(seed))
    p_full = np.minimum(1.0, (1 + _full_counts(X, y, w, 999, seed)) / 1000 * 5)
    assert (res.p_values.min() <= alpha) == (p_full.min() <= alpha)
    if not res.early_stop:
        np.testing.assert_allclose(res.p_values, p_full)


def test_bonferroni_multiplies_by_tested_columns(binary_X):
    X = np.column_stack([binary_X, np.ones(300)])  # constant column is not tested
    y = binary_X[:, 0] + np.random.default_rng(4).normal(0, 3, 300)
    raw = permutation_test(X, y, np.ones(300), 0.99, False, 199, 3)
    adj = permutation_test(X, y, np.ones(300), 0.99, True, 199, 3)
    np.testing.assert_allclose(adj.p_values[:4], np.minimum(1, raw.p_values[:4] * 4))
    assert adj.p_values[4] == 1.0


def test_noise_rarely_splits_with_bonferroni():
    splits = 0
    for t in range(40):
        rng = np.random.default_rng([77, t])
        X = rng.normal(size=(200, 10))
        tree = fit_ctree(X, rng.normal(size=200), np.ones(200), CTreeConfig(alpha=0.01), seed=t)
        splits += not tree.root.is_leaf
    assert splits <= 3


def test_cutpoint_respects_min_bucket():
    x = np.arange(20.0)
    u = np.where(x < 2, 5.0, -0.5)
    assert best_cutpoint(x, u, np.ones(20), False, min_bucket=1) == 1.5
    assert best_cutpoint(x, u, np.ones(20), False, min_bucket=5) == 4.5
    assert best_cutpoint(x, u, np.ones(20), False, min_bucket=11) is None


def test_config_validation():
    with pytest.raises(ValueError):
        CTreeConfig(alpha=0)
    with pytest.raises(ValueError):
        CTreeConfig(max_depth=0)
    with pytest.raises(ValueError, match="unknown"):
        CTreeConfig.from_dict({"depth": 3})


def test_ensemble_transformer_api(binary_X):
    y = binary_X[:, 0] - binary_X[:, 3] + np.random.default_rng(8).normal(0, 0.3, 300)
    est = CTreeRuleEnsemble(max_trees=20, random_state=4)
    Z = est.fit_transform(binary_X, y)
    assert Z.shape == (300, len(est.rules_))
    assert set(np.unique(Z)) <= {0.0, 1.0}
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(ValueError):
        est.fit(binary_X, y, sample_weight=-np.ones(300))
