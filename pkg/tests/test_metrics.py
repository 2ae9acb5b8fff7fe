import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from survrulefit.metrics import bias, binned_rmse, evaluate_predictions, selection_frequency, spearman
from survrulefit.model import RuleModel
from survrulefit.rules import Condition, Rule

NAMES = ("X1", "X2", "X3")


def test_bias_examples():
    t = np.array([0.1, 0.5, -0.3])
    assert bias(t, t) == 0
    assert bias(t + 0.1, t) == pytest.approx(0.1)
    assert bias([0.2, 0.4], [0.1, 0.5]) == pytest.approx(0.0)


def test_binned_rmse_examples():
    t = np.linspace(0, 1, 10)
    assert binned_rmse(t, t, 5) == 0
    rng = np.random.default_rng(0)
    p = t + rng.normal(size=10)
    assert binned_rmse(p, t, 1) == pytest.approx(np.sqrt(np.mean((p - t) ** 2)))
    truth = np.array([0.1, 0.2, 0.3, 0.4])
    assert binned_rmse(truth + [1, 1, 0, 0], truth, 2) == pytest.approx(0.5)


def test_binned_rmse_uneven_bins():
    truth = np.arange(5.0)
    # bins {0,1,2} and {3,4}
    pred = truth + np.array([3, 0, 0, 2, 2])
    assert binned_rmse(pred, truth, 2) == pytest.approx((np.sqrt(3) + 2) / 2)


def test_binned_rmse_needs_enough_rows():
    with pytest.raises(ValueError):
        binned_rmse([1.0], [1.0], 2)


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(ValueError, match="constant"):
        spearman([1, 1, 1], [1, 2, 3])


def test_spearman_ties_use_average_ranks():
    # ranks (1.5, 1.5, 3) vs (1, 2, 3): d^2 sum 0.5
    assert spearman([5, 5, 9], [1, 2, 3]) == pytest.approx(1 - 6 * 0.5 / 24)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=40, unique=True))
def test_spearman_matches_scipy_without_ties(values):
    x = np.array(values)
    y = np.random.default_rng(len(values)).permutation(x.size).astype(float)
    assert spearman(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=50), st.floats(-1, 1))
def test_shift_properties(values, shift):
    t = np.array(values)
    assert bias(t + shift, t) == pytest.approx(shift, abs=1e-12)
    assert binned_rmse(t + shift, t, 2) == pytest.approx(abs(shift), abs=1e-12)


def test_evaluate_constant_prediction():
    pm = evaluate_predictions(np.zeros(60), np.linspace(-1, 1, 60), Q=6)
    assert np.isnan(pm.spearman)
    assert pm.N == 60 and pm.Q == 6


def _fit(rules):
    return RuleModel(0.0, rules, np.ones(len(rules)), 0.1, "dea", 1.0, 10, NAMES)


def test_selection_counts():
    r1 = Rule((Condition(0, "==", 1),))
    r13 = Rule((Condition(0, "==", 1), Condition(2, ">", 0.0)))
    summary = selection_frequency([_fit([r1]), _fit([r1, r13]), _fit([r13]), None], NAMES)
    assert summary.counts == {"X1": 3, "X2": 0, "X3": 2}
    assert summary.n_selected == (1, 2, 1, 0)
    assert summary.frequency("X1") == 0.75


def test_selection_table_row():
    r = [Rule((Condition(j % 3, ">", float(j)),)) for j in range(10)]
    summary = selection_frequency([_fit(r[:3]), _fit([]), _fit(r)], NAMES)
    assert (summary.median, summary.min, summary.max) == (3, 0, 10)
    assert summary.table_row() == "3 (0, 10)"
    assert selection_frequency([_fit(r[:1]), _fit(r[:2])], NAMES).table_row() == "1.5 (1, 2)"
