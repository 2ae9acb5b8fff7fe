import numpy as np
import pytest
from sklearn.base import clone

from survrulefit import _rsf_kernels as K
from survrulefit.data import kaplan_meier
from survrulefit.forest import RandomSurvivalForest


@pytest.fixture(scope="module")
def null_data():
    rng = np.random.default_rng(40)
    n = 1000
    X = rng.normal(size=(n, 4))
    T = rng.exponential(10.0, n)
    return X, T, np.ones(n, dtype=int)


@pytest.fixture(scope="module")
def null_forest(null_data):
    X, T, E = null_data
    return RandomSurvivalForest(n_estimators=100, random_state=1, n_jobs=1).fit(X, T, E)


def test_null_predictions_near_marginal(null_data, null_forest):
    X, T, E = null_data
    t = np.median(T)
    km = kaplan_meier(T, E)(t)
    # individual predictions scatter (leaf size 15); their average tracks the marginal curve
    assert abs(null_forest.oob_survival(t).mean() - km) < 0.05


def test_time_zero_is_one(null_forest, null_data):
    assert np.all(null_forest.predict_survival(null_data[0][:20], 0.0) == 1.0)


def test_monotone_in_horizon(null_forest, null_data):
    X = null_data[0][:50]
    s = [null_forest.predict_survival(X, t) for t in (1.0, 5.0, 10.0, 30.0)]
    for a, b in zip(s, s[1:]):
        assert np.all(a >= b)
    assert np.all((s[-1] >= 0) & (s[0] <= 1))


def test_left_limit_at_event_time(null_forest, null_data):
    X, T, _ = null_data
    t = np.sort(T)[10]
    assert np.all(null_forest.cumulative_hazard(X[:5], t, left=True) <= null_forest.cumulative_hazard(X[:5], t))


def test_oob_uses_only_out_of_bag_trees(null_data):
    X, T, E = null_data
    f = RandomSurvivalForest(n_estimators=8, random_state=3, n_jobs=1).fit(X, T, E)
    t = np.full(X.shape[0], 8.0)
    per_tree = []
    for b in range(8):
        # mark every tree but b as in-bag for every row: only tree b contributes
        fake = np.ones_like(f.inbag_)
        fake[b] = 0
        total, used = K.forest_chf(*f._packed, X, t, False, fake, True)
        assert np.all(used == 1)
        per_tree.append(total)
    per_tree = np.array(per_tree)
    oob = f.inbag_ == 0
    covered = oob.any(axis=0)
    expected = (per_tree * oob).sum(axis=0)[covered] / oob.sum(axis=0)[covered]
    with np.errstate(all="ignore"), pytest.warns(RuntimeWarning, match="never out-of-bag"):
        got = f.oob_cumulative_hazard(8.0)
    np.testing.assert_allclose(got[covered], expected, rtol=1e-12)


def test_n_jobs_does_not_change_results(null_data):
    X, T, E = null_data
    base = RandomSurvivalForest(n_estimators=24, random_state=9)
    a = clone(base).set_params(n_jobs=1).fit(X, T, E)
    b = clone(base).set_params(n_jobs=3).fit(X, T, E)
    np.testing.assert_array_equal(a.inbag_, b.inbag_)
    np.testing.assert_array_equal(a.oob_survival(7.0), b.oob_survival(7.0))


def test_requires_events():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError, match="no events"):
        RandomSurvivalForest(n_estimators=2).fit(X, np.ones(10), np.zeros(10))


def test_covariate_signal_is_learned():
    rng = np.random.default_rng(41)
    n = 800
    X = rng.normal(size=(n, 3))
    T = rng.exponential(np.exp(-1.5 * X[:, 0]))
    f = RandomSurvivalForest(n_estimators=100, random_state=2, n_jobs=1).fit(X, T, np.ones(n))
    grid = np.zeros((2, 3))
    grid[1, 0] = 1.5
    s = f.predict_survival(grid, 0.5)
    assert s[0] > s[1] + 0.2
