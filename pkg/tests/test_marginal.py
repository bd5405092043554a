"""Marginal survival models: step curves, parametric fits, curve file IO."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from margfit import (
    ConvergenceError,
    DataError,
    Empirical,
    Exponential,
    ExternalCurve,
    FitError,
    Lognormal,
    PiecewiseExponential,
    StepSurvival,
    SurvivalDataset,
    Weibull,
    fit_exponential,
    fit_piecewise_exponential,
    fit_weibull,
    kaplan_meier,
    load_external_curve,
    map_exponential,
    save_curve,
    survival_at,
)


def make(time, status):
    time = np.asarray(time, dtype=float)
    return SurvivalDataset(
        time=time, status=np.asarray(status), covariates=np.zeros((time.size, 1))
    )


class TestStepSurvival:
    def test_left_continuous_evaluation(self):
        s = StepSurvival(np.array([1.0, 2.0]), np.array([0.8, 0.5]))
        # value at a jump point is the value from the left
        assert s(0.0) == 1.0
        assert s(1.0) == 1.0
        assert s(1.5) == 0.8
        assert s(2.0) == 0.8
        assert s(2.5) == 0.5
        assert np.array_equal(s(np.array([0.5, 1.0, 3.0])), [1.0, 1.0, 0.5])

    def test_empty_curve_is_one(self):
        s = StepSurvival(np.empty(0), np.empty(0))
        assert s(123.0) == 1.0

    @pytest.mark.parametrize(
        "t,v",
        [
            ([2.0, 1.0], [0.9, 0.8]),  # not ascending
            ([1.0, 1.0], [0.9, 0.8]),  # duplicate jump
            ([1.0], [1.5]),  # above one
            ([1.0, 2.0], [0.5, 0.9]),  # increasing
            ([-1.0], [0.5]),  # negative time
        ],
    )
    def test_validation(self, t, v):
        with pytest.raises(DataError):
            StepSurvival(np.asarray(t, dtype=float), np.asarray(v, dtype=float))


class TestKaplanMeier:
    def test_hand_example(self):
        # times 1, 2, 2, 3, 4 with statuses 1, 0, 1, 1, 0
        km = kaplan_meier(make([1, 2, 2, 3, 4], [1, 0, 1, 1, 0]))
        assert km.jump_times.tolist() == [1.0, 2.0, 3.0]
        assert np.allclose(km.values, [4 / 5, 4 / 5 * 3 / 4, 4 / 5 * 3 / 4 * 1 / 2])

    def test_uncensored_equals_empirical(self, uncensored_sample):
        km = kaplan_meier(uncensored_sample)
        grid = np.linspace(0.0, uncensored_sample.time.max() * 1.1, 211)
        # with no censoring the product-limit curve is (1/n) #{T_i >= t}
        emp = (uncensored_sample.time[None, :] >= grid[:, None]).mean(axis=1)
        assert np.allclose(km(grid), emp, atol=1e-12)

    def test_all_censored_is_constant_one(self):
        km = kaplan_meier(make([1, 2, 3], [0, 0, 0]))
        assert km(10.0) == 1.0
        assert km.jump_times.size == 0

    def test_last_observation_censored_holds_level(self):
        km = kaplan_meier(make([1, 2, 3], [1, 1, 0]))
        assert km(100.0) == pytest.approx(2 / 3 * 1 / 2)


class TestParametricModels:
    def test_exponential_forms(self):
        m = Exponential(rate=2.0)
        assert m.survival(0.5) == pytest.approx(np.exp(-1.0))
        assert m.cumulative_hazard(3.0) == pytest.approx(6.0)
        assert m.inverse_survival(np.exp(-1.0)) == pytest.approx(0.5)
        assert m.inverse_cumulative_hazard(6.0) == pytest.approx(3.0)

    def test_weibull_forms(self):
        m = Weibull(shape=2.0, scale=3.0)
        t = np.array([0.5, 1.0, 4.0])
        assert np.allclose(m.survival(t), np.exp(-((t / 3.0) ** 2)))
        assert m.inverse_survival(m.survival(1.7)) == pytest.approx(1.7)
        assert m.inverse_cumulative_hazard(m.cumulative_hazard(1.7)) == pytest.approx(1.7)

    def test_piecewise_exponential_forms(self):
        m = PiecewiseExponential(cuts=(1.0, 2.0), rates=(0.5, 1.0, 0.25))
        assert m.cumulative_hazard(0.5) == pytest.approx(0.25)
        assert m.cumulative_hazard(1.5) == pytest.approx(0.5 + 0.5)
        assert m.cumulative_hazard(3.0) == pytest.approx(0.5 + 1.0 + 0.25)
        for u in (0.1, 0.6, 1.4, 2.1):
            assert m.inverse_cumulative_hazard(m.cumulative_hazard(u)) == pytest.approx(u)
            assert m.inverse_survival(m.survival(u)) == pytest.approx(u)

    def test_piecewise_single_segment_matches_exponential(self):
        pw = PiecewiseExponential(cuts=(), rates=(0.7,))
        ex = Exponential(rate=0.7)
        t = np.linspace(0, 5, 11)
        assert np.allclose(pw.survival(t), ex.survival(t))

    def test_lognormal_matches_scipy(self):
        m = Lognormal(mu=0.3, sigma=1.2)
        t = np.array([0.1, 1.0, 7.0])
        ref = stats.lognorm.sf(t, s=1.2, scale=np.exp(0.3))
        assert np.allclose(m.survival(t), ref)

    def test_validation(self):
        with pytest.raises(DataError):
            Exponential(rate=0.0)
        with pytest.raises(DataError):
            Weibull(shape=-1.0, scale=1.0)
        with pytest.raises(DataError):
            PiecewiseExponential(cuts=(2.0, 1.0), rates=(1.0, 1.0, 1.0))
        with pytest.raises(DataError):
            PiecewiseExponential(cuts=(1.0,), rates=(1.0,))  # wrong count

    def test_survival_at_dispatch(self):
        assert survival_at(Exponential(rate=1.0), 1.0) == pytest.approx(np.exp(-1))
        step = StepSurvival(np.array([1.0, 2.0]), np.array([0.5, 0.0]))
        assert survival_at(Empirical(step), 1.5) == pytest.approx(0.5)
        curve = ExternalCurve(StepSurvival(np.array([1.0]), np.array([0.4])))
        assert survival_at(curve, 2.0) == pytest.approx(0.4)


class TestExponentialFits:
    def test_events_over_exposure(self):
        d = make([2, 3, 5], [1, 0, 1])
        assert fit_exponential(d).rate == pytest.approx(2 / 10)

    def test_map_posterior_mean(self):
        d = make([2, 3, 5], [1, 0, 1])
        assert map_exponential(d, 1.0, 4.0).rate == pytest.approx(3 / 14)
        # vanishing prior recovers the MLE
        assert map_exponential(d, 1e-12, 1e-12).rate == pytest.approx(0.2)

    def test_map_works_with_no_events(self):
        d = make([2, 3], [0, 0])
        assert map_exponential(d, 2.0, 10.0).rate == pytest.approx(2 / 15)

    def test_mle_consistency(self):
        rng = np.random.default_rng(5)
        t = rng.exponential(scale=0.5, size=4000)
        c = rng.exponential(scale=0.5, size=4000)
        d = SurvivalDataset(
            time=np.minimum(t, c),
            status=(t <= c).astype(int),
            covariates=np.zeros((4000, 1)),
        )
        # MLE of the rate: 3 sigma of sqrt(events)/exposure around truth
        se = np.sqrt(d.n_events) / d.time.sum()
        assert abs(fit_exponential(d).rate - 2.0) < 3 * se

    def test_errors(self):
        with pytest.raises(DataError):
            fit_exponential(make([1, 2], [0, 0]))
        with pytest.raises(DataError):
            map_exponential(make([1], [1]), -1.0, 1.0)


class TestWeibullFit:
    def test_recovers_parameters(self):
        rng = np.random.default_rng(21)
        t = 3.0 * rng.weibull(2.0, size=5000)
        c = rng.uniform(0, 6.0, size=5000)
        d = SurvivalDataset(
            time=np.minimum(t, c),
            status=(t <= c).astype(int),
            covariates=np.zeros((5000, 1)),
        )
        m = fit_weibull(d)
        assert abs(m.shape - 2.0) < 0.1
        assert abs(m.scale - 3.0) < 0.15

    def test_profile_score_is_zero_at_solution(self):
        rng = np.random.default_rng(8)
        t = rng.weibull(1.5, size=400)
        d = make(t, np.ones(400, dtype=int))
        m = fit_weibull(d)
        # stationarity of the profile log-likelihood in the shape
        def prof(k):
            s = (np.sum(t**k) / 400) ** (1 / k)
            return np.sum(
                np.log(k) - k * np.log(s) + (k - 1) * np.log(t) - (t / s) ** k
            )
        eps = 1e-5
        deriv = (prof(m.shape + eps) - prof(m.shape - eps)) / (2 * eps)
        assert abs(deriv) < 1e-3

    def test_needs_two_distinct_event_times(self):
        with pytest.raises(FitError, match="two distinct"):
            fit_weibull(make([3, 3, 3, 5], [1, 1, 1, 0]))


class TestPiecewiseFit:
    def test_occurrence_exposure_by_hand(self):
        # one cut at 2: exposures 2+2+1 = 5 and 1+0+0 = 1; deaths 1 and 1
        d = make([1, 3, 2], [1, 1, 0])
        m = fit_piecewise_exponential(d, cuts=(2.0,))
        assert m.rates == pytest.approx((1 / 5, 1 / 1))

    def test_no_cuts_is_exponential(self):
        d = make([2, 3, 5], [1, 0, 1])
        m = fit_piecewise_exponential(d)
        assert isinstance(m, Exponential)
        assert m.rate == pytest.approx(0.2)

    def test_recovers_piecewise_design(self):
        rng = np.random.default_rng(9)
        truth = PiecewiseExponential(cuts=(1.0, 2.0), rates=(0.25, 1.0, 0.25))
        u = rng.exponential(size=6000)
        t = np.array([truth.inverse_cumulative_hazard(x) for x in u])
        d = make(t, np.ones(6000, dtype=int))
        m = fit_piecewise_exponential(d, cuts=(1.0, 2.0))
        assert np.allclose(m.rates, truth.rates, rtol=0.12)

    def test_zero_exposure_interval(self):
        d = make([0.5, 0.7], [1, 1])
        with pytest.raises(FitError, match="zero exposure"):
            fit_piecewise_exponential(d, cuts=(5.0,))

    def test_bad_cuts(self):
        d = make([1, 2], [1, 1])
        with pytest.raises(DataError):
            fit_piecewise_exponential(d, cuts=(2.0, 1.0))
        with pytest.raises(DataError):
            fit_piecewise_exponential(d, cuts=(-1.0,))


class TestCurveFiles:
    def test_round_trip(self, tmp_path, censored_sample):
        km = kaplan_meier(censored_sample)
        path = tmp_path / "curve.csv"
        save_curve(km, path)
        back = load_external_curve(path)
        assert np.array_equal(back.step.jump_times, km.jump_times)
        assert np.array_equal(back.step.values, km.values)

    def test_header_enforced(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("t,s\n0,1\n")
        with pytest.raises(DataError, match="header"):
            load_external_curve(p)

    def test_must_start_at_origin(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("time,survival\n0,0.9\n")
        with pytest.raises(DataError, match=r"\(0, 1\)"):
            load_external_curve(p)

    def test_increasing_values_rejected(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("time,survival\n0,1\n1,0.5\n2,0.7\n")
        with pytest.raises(DataError, match="nonincreasing"):
            load_external_curve(p)

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_external_curve(tmp_path / "absent.csv")

    def test_convergence_error_importable(self):
        # exercised rarely; keep the symbol in the public surface
        assert issubclass(ConvergenceError, Exception)
