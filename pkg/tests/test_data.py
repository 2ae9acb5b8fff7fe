import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survrulefit.data import (
    BINARY,
    CONTINUOUS,
    Dataset,
    Horizon,
    HorizonStatus,
    Schema,
    classify_at_horizon,
    kaplan_meier,
    km_median_survival,
    load_csv,
    resolve_horizon,
    save_csv,
)
from survrulefit.exceptions import DataError


def _dataset(time, event, treatment=None, X=None):
    n = len(time)
    treatment = np.zeros(n) if treatment is None else treatment
    X = np.zeros((n, 1)) if X is None else X
    return Dataset(X, treatment, time, event)


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_four_rows_one_covariate(self, tmp_path):
        path = _write(tmp_path, "id,treatment,time,event,x1\n1,0,5,1,0\n2,1,3,0,1\n3,0,8,1,0\n4,1,2,1,1\n")
        d = load_csv(path)
        assert (d.n, d.p) == (4, 1)
        assert d.covariate_names == ("x1",)
        assert list(d.ids) == ["1", "2", "3", "4"]

    def test_binary_kind_inferred(self, tmp_path):
        path = _write(tmp_path, "treatment,time,event,x1,x2\n0,5,1,0,0.5\n1,3,0,1,1.5\n0,8,1,0,2\n1,2,1,1,3\n")
        d = load_csv(path)
        assert d.covariate_kinds == (BINARY, CONTINUOUS)

    def test_schema_overrides_kind(self, tmp_path):
        path = _write(tmp_path, "treatment,time,event,x1\n0,5,1,0\n1,3,0,1\n")
        d = load_csv(path, Schema(kinds={"x1": CONTINUOUS}))
        assert d.covariate_kinds == (CONTINUOUS,)

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = _write(tmp_path, "treatment,time,event,x1\n0,5,1,0\n1,abc,0,1\n")
        with pytest.raises(DataError, match=r"'abc'.*'time'.*row 2"):
            load_csv(path)

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path, "treatment,time,x1\n0,5,0\n")
        with pytest.raises(DataError, match="missing required column 'event'"):
            load_csv(path)

    def test_bad_treatment_value(self, tmp_path):
        path = _write(tmp_path, "treatment,time,event,x1\n0,5,1,0\n2,3,0,1\n")
        with pytest.raises(DataError, match=r"treatment value '2'.*row 2"):
            load_csv(path)

    def test_negative_time(self, tmp_path):
        path = _write(tmp_path, "treatment,time,event,x1\n0,-1,1,0\n")
        with pytest.raises(DataError, match="negative time.*row 1"):
            load_csv(path)

    def test_declared_binary_must_be_binary(self, tmp_path):
        path = _write(tmp_path, "treatment,time,event,x1\n0,1,1,0.5\n")
        with pytest.raises(DataError, match="declared binary"):
            load_csv(path, Schema(kinds={"x1": BINARY}))

    def test_roundtrip_is_identity(self, tmp_path, s1_trial):
        d = s1_trial.dataset
        save_csv(d, tmp_path / "a.csv")
        first = load_csv(tmp_path / "a.csv")
        np.testing.assert_array_equal(first.covariates, d.covariates)
        np.testing.assert_array_equal(first.time, d.time)
        save_csv(first, tmp_path / "b.csv")
        assert load_csv(tmp_path / "b.csv") == first
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestDataset:
    def test_arrays_read_only(self):
        d = _dataset([1.0, 2.0], [1, 0])
        with pytest.raises(ValueError):
            d.time[0] = 3.0

    @pytest.mark.parametrize(
        "kw, msg",
        [
            (dict(time=[-1.0, 1.0]), "time"),
            (dict(event=[2, 0]), "event"),
            (dict(treatment=[0, 3]), "treatment"),
        ],
    )
    def test_invariants(self, kw, msg):
        base = dict(time=[1.0, 2.0], event=[1, 0], treatment=[0, 1])
        base.update(kw)
        with pytest.raises(DataError, match=msg):
            Dataset(np.zeros((2, 1)), base["treatment"], base["time"], base["event"])

    def test_binary_kind_checked(self):
        with pytest.raises(DataError):
            Dataset(np.array([[0.5], [1.0]]), [0, 1], [1, 2], [1, 1], covariate_kinds=(BINARY,))


class TestClassify:
    @pytest.mark.parametrize(
        "time, event, expected",
        [
            (5, 1, HorizonStatus.EVENT_BEFORE_HORIZON),
            (12, 0, HorizonStatus.SURVIVED_PAST_HORIZON),
            (7, 0, HorizonStatus.CENSORED_UNKNOWN),
            (10, 0, HorizonStatus.SURVIVED_PAST_HORIZON),  # censored exactly at t*
            (10, 1, HorizonStatus.EVENT_BEFORE_HORIZON),  # event exactly at t*
            (12, 1, HorizonStatus.SURVIVED_PAST_HORIZON),
        ],
    )
    def test_examples(self, time, event, expected):
        status = classify_at_horizon(_dataset([float(time)], [event]), Horizon(10))
        assert status[0] == expected

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(0, 20), st.integers(0, 1)), min_size=1, max_size=40),
        st.floats(0.1, 20),
    )
    def test_partition(self, rows, t):
        time = [r[0] for r in rows]
        event = [r[1] for r in rows]
        d = _dataset(time, event)
        status = classify_at_horizon(d, Horizon(t))
        assert set(np.unique(status)) <= {-1, 0, 1}
        unknown = (np.asarray(event) == 0) & (np.asarray(time) < t)
        np.testing.assert_array_equal(status == HorizonStatus.CENSORED_UNKNOWN, unknown)


class TestHorizon:
    def test_positive(self):
        with pytest.raises(DataError):
            Horizon(0)

    def test_resolve(self):
        d = _dataset([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1], treatment=[0, 0, 1, 1])
        assert resolve_horizon(d, "auto").t_star == 2.0
        assert resolve_horizon(d, "auto-control").t_star == 1.0
        assert resolve_horizon(d, 7).t_star == 7.0
        with pytest.raises(DataError):
            resolve_horizon(d, "median")


class TestKaplanMeier:
    def test_product_limit_fixture(self):
        km = kaplan_meier([1, 2, 3, 4], [1, 1, 1, 1])
        np.testing.assert_array_equal(km([0, 1, 1.5, 2, 3, 4, 9]), [1, 0.75, 0.75, 0.5, 0.25, 0, 0])
        assert km(2, left=True) == 0.75

    def test_with_censoring_fixture(self):
        # at risk 6,5(censored at 2 leaves 4),... hand product limit
        km = kaplan_meier([1, 2, 2, 3, 5, 6], [1, 1, 0, 1, 0, 1])
        expected = [5 / 6, 5 / 6 * 4 / 5, 5 / 6 * 4 / 5 * 2 / 3, 5 / 6 * 4 / 5 * 2 / 3 * 0]
        np.testing.assert_allclose(km([1, 2, 3, 6]), expected, rtol=0, atol=1e-15)

    def test_median_examples(self):
        assert km_median_survival(_dataset([1.0, 2, 3, 4], [1, 1, 1, 1])).t_star == 2.0
        assert km_median_survival(_dataset([5.0], [1])).t_star == 5.0

    def test_median_errors(self):
        with pytest.raises(DataError, match="no events"):
            km_median_survival(_dataset([1.0, 2.0], [0, 0]))
        with pytest.raises(DataError, match="never reaches 0.5"):
            km_median_survival(_dataset([1.0, 2.0, 3.0], [1, 0, 0]))

    def test_median_permutation_invariant(self, s1_trial, rng):
        d = s1_trial.dataset
        perm = rng.permutation(d.n)
        assert km_median_survival(d).t_star == km_median_survival(d.subset(perm)).t_star
