import math

import numpy as np
import pytest
from scipy.special import expit

from survrulefit.data import BINARY, Horizon
from survrulefit.simulate import (
    SimScenario,
    assign_treatment,
    calibrate_censoring,
    calibrated,
    empirical_censoring_rate,
    event_times,
    gen_covariates,
    gen_outcomes,
    make_scenario,
    simulate_trial,
    true_cate,
)


class TestCovariates:
    def test_independent_binary_means(self, rng):
        X = gen_covariates(make_scenario("S1"), 1000, rng)
        assert X.shape == (1000, 10)
        assert np.all(np.abs(X[:, :5].mean(axis=0) - 0.5) < 0.05)
        assert set(np.unique(X[:, :5])) == {0.0, 1.0}

    def test_highdim_latent_structure(self):
        # same draw order as the generator, without the binarization step
        scn = make_scenario("S1", setting="highdim_correlated")
        rng = np.random.default_rng(3)
        X = gen_covariates(scn, 10000, rng)
        assert X.shape == (10000, 100)
        kinds = scn.covariate_kinds
        assert [j for j, k in enumerate(kinds) if k == BINARY] == list(range(5)) + list(range(10, 55))
        cont = X[:, 55:]
        assert abs(np.corrcoef(cont[:, 0], cont[:, 1])[0, 1] - math.exp(-1)) < 0.03
        assert np.all(np.abs(cont.var(axis=0) - 0.5) < 0.04)
        cont2 = X[:, 5:10]
        assert abs(np.corrcoef(cont2[:, 0], cont2[:, 1])[0, 1] - math.exp(-1)) < 0.03


class TestTreatment:
    def test_reference_point_propensity(self):
        scn = make_scenario("S1")
        assert scn.propensity_score(np.zeros((1, 10)))[0] == pytest.approx(0.5987, abs=5e-5)
        assert scn.propensity_score(np.zeros((1, 10)))[0] == pytest.approx(expit(0.4))

    def test_zero_coefficients_give_half(self, rng):
        scn = SimScenario(propensity="0")
        assert np.all(scn.propensity_score(rng.normal(size=(5, 10))) == 0.5)

    def test_treated_fraction_matches_mean_propensity(self, rng):
        scn = make_scenario("S1")
        X = gen_covariates(scn, 10000, rng)
        A, e = assign_treatment(X, scn, rng)
        assert abs(A.mean() - e.mean()) < 0.02


class TestOutcomes:
    def test_survival_at_scale_is_exp_minus_one(self):
        scn = make_scenario("S1", censor_rate=0.0)
        rng = np.random.default_rng(8)
        n = 10**6
        X = np.zeros((n, 10))
        T = event_times(X, np.zeros(n, dtype=int), scn, 1.0 - rng.random(n))
        assert abs(np.mean(T > 16) - math.exp(-1)) < 3 * math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / n) + 1e-4

    def test_u_to_one_gives_zero_time(self):
        scn = make_scenario("S1")
        assert event_times(np.zeros((1, 10)), np.array([1]), scn, np.array([1.0]))[0] == 0.0

    def test_no_censoring_when_target_zero(self, rng):
        scn = calibrated(make_scenario("S1", censor_rate=0.0), rng)
        assert scn.censoring.never
        trial = simulate_trial(scn, 300, rng)
        assert np.all(trial.dataset.event == 1)

    def test_requires_calibration(self, rng):
        with pytest.raises(ValueError, match="calibrate"):
            simulate_trial(make_scenario("S1"), 10, rng)

    def test_bitwise_reproducible(self, s1_scenario):
        a = simulate_trial(s1_scenario, 200, np.random.default_rng(5))
        b = simulate_trial(s1_scenario, 200, np.random.default_rng(5))
        assert a.dataset == b.dataset
        assert np.array_equal(a.outcomes.latent_time, b.outcomes.latent_time)

    def test_observed_is_min_of_latent(self, s1_scenario, rng):
        X = gen_covariates(s1_scenario, 500, rng)
        A, _ = assign_treatment(X, s1_scenario, rng)
        out = gen_outcomes(X, A, s1_scenario, rng)
        np.testing.assert_array_equal(out.time, np.minimum(out.latent_time, out.censor_time))
        np.testing.assert_array_equal(out.event, out.latent_time < out.censor_time)

    @pytest.mark.parametrize("a, scale", [(0, 16.0), (1, 26.0)])
    def test_empirical_survival_within_three_se(self, a, scale):
        scn = make_scenario("S1")
        rng = np.random.default_rng(10 + a)
        x = np.array([[1, 0, 1, 0, 0, 0.3, -0.2, 0, 0, 0]], dtype=float)
        n = 200_000
        T = event_times(np.repeat(x, n, axis=0), np.full(n, a), scn, 1.0 - rng.random(n))
        for t in (scale / 2, scale, 2 * scale):
            s = scn.survival(t, x, np.array([a]))[0]
            assert abs(np.mean(T > t) - s) <= 3 * math.sqrt(s * (1 - s) / n) + 1e-12


class TestCalibration:
    def test_thirty_percent_on_calibration_sample(self):
        scn = make_scenario("S1", censor_rate=0.3)
        par = calibrate_censoring(scn, 0.3, np.random.default_rng(21))
        cal = scn.with_censoring(parameter=par)
        assert abs(empirical_censoring_rate(cal, np.random.default_rng(21)) - 0.3) < 0.005

    def test_sixty_percent(self):
        scn = calibrated(make_scenario("S1", censor_rate=0.6), np.random.default_rng(22))
        assert abs(empirical_censoring_rate(scn, np.random.default_rng(22)) - 0.6) < 0.005

    def test_fresh_trial_close_to_target(self, s1_scenario):
        trial = simulate_trial(s1_scenario, 10000, np.random.default_rng(23))
        assert abs(1 - trial.dataset.event.mean() - 0.3) < 0.02

    def test_covariate_dependent(self):
        scn = calibrated(make_scenario("S1", censoring="covariate", censor_rate=0.3), np.random.default_rng(24))
        assert scn.censoring.kind == "covariate"
        assert abs(empirical_censoring_rate(scn, np.random.default_rng(24)) - 0.3) < 0.005
        X = np.zeros((2, 10))
        X[1, 0] = 1.0
        # C = -2 log U / exp(b0 + b1 X1 + b2 X2): larger b1*X1 means earlier censoring
        s = scn.censoring.survival(np.array([1.0, 1.0]), X)
        assert s[1] < s[0]

    def test_zero_target_is_never_censor(self):
        scn = make_scenario("S1", censoring="covariate", censor_rate=0.0)
        assert calibrate_censoring(scn, 0.0, np.random.default_rng(0)) == -np.inf
        assert calibrate_censoring(make_scenario("S1"), 0.0, np.random.default_rng(0)) == 0.0


class TestTrueCate:
    def test_reference_value(self):
        scn = make_scenario("S1")
        t = true_cate(np.zeros((1, 10)), scn, Horizon(16))
        assert t.tau[0] == pytest.approx(math.exp(-((16 / 26) ** 2)) - math.exp(-1), abs=1e-12)
        assert t.tau[0] == pytest.approx(0.3169, abs=5e-5)
        assert t.surv1[0] == pytest.approx(0.6848, abs=5e-5)
        assert t.surv0[0] == pytest.approx(0.3679, abs=5e-5)

    def test_reference_value_monte_carlo(self):
        scn = make_scenario("S1")
        rng = np.random.default_rng(30)
        n = 10**6
        X = np.zeros((n, 10))
        U = 1.0 - rng.random((2, n))
        T0 = event_times(X, np.zeros(n, dtype=int), scn, U[0])
        T1 = event_times(X, np.ones(n, dtype=int), scn, U[1])
        assert abs(np.mean(T1 > 16) - np.mean(T0 > 16) - 0.3169) < 0.003

    def test_limits(self, rng):
        scn = make_scenario("S2")
        X = gen_covariates(scn, 50, rng)
        assert np.all(true_cate(X, scn, 1e-12).tau == pytest.approx(0.0, abs=1e-9))
        assert np.all(np.abs(true_cate(X, scn, 1e6).tau) < 1e-12)

    @pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
    def test_bounds_and_identity(self, sid, rng):
        scn = make_scenario(sid)
        X = gen_covariates(scn, 400, rng)
        t = true_cate(X, scn, 15.0)
        assert np.all((t.surv0 >= 0) & (t.surv0 <= 1) & (t.surv1 >= 0) & (t.surv1 <= 1))
        np.testing.assert_array_equal(t.tau, t.surv1 - t.surv0)
        assert np.all(np.abs(t.tau) <= 1)


class TestScenarioFunctions:
    def test_weibull_parameters(self):
        for sid, scales in (("S1", (16, 26)), ("S2", (20, 22)), ("S3", (20, 22))):
            scn = make_scenario(sid)
            assert (scn.shape, scn.scale0, scn.scale1) == (2.0, *scales)

    def test_s3_includes_interactions(self):
        scn = make_scenario("S3")
        x = np.zeros((1, 10))
        x[0, [0, 2, 6, 7]] = [1.0, 1.0, 2.0, 3.0]  # X1, X3, X7, X8
        b = 1.6 * 1 - 1.2 * 2 - 1 * 2 - 0.8 * 9
        h = 2.5 * 1 - 2 * 1 - 1.4 * 1
        assert scn.linear_predictor(x, np.array([0]))[0] == pytest.approx(b)
        assert scn.linear_predictor(x, np.array([1]))[0] == pytest.approx(b + h)

    def test_dict_roundtrip(self, s1_scenario):
        assert SimScenario.from_dict(s1_scenario.to_dict()) == s1_scenario

    def test_rejects_out_of_range_column(self):
        with pytest.raises(ValueError, match="beyond"):
            SimScenario(effect="X11")
