"""Mixed logit: simulated likelihood, gradients, estimation."""

import os

import numpy as np
import pytest

from dce import (
    EstimationError,
    HaltonConfig,
    MixingSpec,
    build_parameter_index,
    code_dataset,
    estimate_mmnl,
    estimate_mnl,
    finite_diff_grad,
    lr_test,
    make_draws,
    mmnl_predict,
    mnl_gradient,
    mnl_loglik,
    mnl_probabilities,
    msl_gradient,
    msl_loglik,
)

from helpers import simulated_panel

ASC_MIX = ("asc_drone", "asc_truck")


def small_mixing(n_draws=100, drop=10, antithetic=False):
    return MixingSpec(random_params=ASC_MIX,
                      halton=HaltonConfig(n_draws=n_draws, drop=drop),
                      antithetic=antithetic)


@pytest.fixture(scope="module")
def oracle_toy(design32):
    """8-respondent panel whose Halton-vs-Monte-Carlo gap is frozen small."""
    cfg, dataset, panel, truth = simulated_panel(
        design32, 8, seed=5, sds=(1.5, 1.241))
    return {"panel": panel, "truth": truth}


class TestMixingSpec:
    def test_validation_codes(self):
        with pytest.raises(EstimationError) as err:
            MixingSpec(distribution="lognormal")
        assert err.value.code == "unsupported_distribution"

        with pytest.raises(EstimationError) as err:
            MixingSpec(random_params=("asc_drone", "asc_drone"))
        assert err.value.code == "duplicate_random_param"

        with pytest.raises(EstimationError) as err:
            MixingSpec(random_params=("a", "b", "c"),
                       halton=HaltonConfig(primes=(2, 3)))
        assert err.value.code == "too_few_primes"

        with pytest.raises(EstimationError) as err:
            MixingSpec(antithetic=True,
                       halton=HaltonConfig(n_draws=501))
        assert err.value.code == "odd_draw_count"

    def test_make_draws_shape(self):
        z = make_draws(small_mixing(n_draws=40), 7)
        assert z.shape == (7, 40, 2)

    def test_antithetic_pairs(self):
        z = make_draws(small_mixing(n_draws=40, antithetic=True), 3)
        np.testing.assert_array_equal(z[:, 0::2, :], -z[:, 1::2, :])


class TestDegeneracyOracle:
    @pytest.mark.parametrize("n_draws", [1, 7, 200])
    def test_zero_sd_equals_mnl(self, panel50, n_draws):
        panel = panel50["panel"]
        truth = panel50["truth"]
        params = np.concatenate([truth, [0.0, 0.0]])
        got = msl_loglik(params, panel, small_mixing(n_draws=n_draws))
        want = mnl_loglik(truth, panel)
        assert got == pytest.approx(want, abs=1e-10)

    def test_zero_sd_fixed_gradient_equals_mnl(self, panel50):
        panel = panel50["panel"]
        truth = panel50["truth"]
        params = np.concatenate([truth, [0.0, 0.0]])
        g = msl_gradient(params, panel, small_mixing(n_draws=50))
        np.testing.assert_allclose(g[:38], mnl_gradient(truth, panel),
                                   atol=1e-8)

    def test_single_draw_sits_at_the_median(self, design32):
        # one respondent, drop=0, one draw, one random parameter: Halton
        # index 1 in base 2 is u=0.5, whose normal quantile is exactly
        # zero, so any sd leaves the likelihood at its no-mixing value
        cfg, dataset, panel, truth = simulated_panel(design32, 1, seed=2)
        mixing = MixingSpec(random_params=("asc_drone",),
                            halton=HaltonConfig(primes=(2,), n_draws=1,
                                                drop=0))
        params = np.concatenate([truth, [2.0]])
        assert msl_loglik(params, panel, mixing) == pytest.approx(
            mnl_loglik(truth, panel), abs=1e-12)

    def test_monte_carlo_oracle(self, oracle_toy):
        panel, truth = oracle_toy["panel"], oracle_toy["truth"]
        mixing = MixingSpec(random_params=ASC_MIX,
                            halton=HaltonConfig(n_draws=500, drop=10))
        ll_halton = msl_loglik(truth, panel, mixing)
        mc = np.random.default_rng(123).standard_normal((8, 100000, 2))
        ll_mc = msl_loglik(truth, panel, mixing, draws=mc)
        assert abs(ll_halton - ll_mc) < 0.05


class TestInvariances:
    def test_antithetic_sign_invariance_is_exact(self, mixed_panel40):
        panel = mixed_panel40["panel"]
        truth = mixed_panel40["truth"]
        mixing = small_mixing(n_draws=100, antithetic=True)
        plus = msl_loglik(truth, panel, mixing)
        flipped = truth.copy()
        flipped[-2:] = -flipped[-2:]
        minus = msl_loglik(flipped, panel, mixing)
        assert plus == minus  # bitwise, not approximately

    def test_draws_are_fixed_across_calls(self, mixed_panel40):
        panel = mixed_panel40["panel"]
        truth = mixed_panel40["truth"]
        a = msl_loglik(truth, panel, small_mixing())
        b = msl_loglik(truth, panel, small_mixing())
        assert a == b

    def test_thread_count_does_not_change_bits(self, mixed_panel40):
        panel = mixed_panel40["panel"]
        truth = mixed_panel40["truth"]
        one = msl_loglik(truth, panel, small_mixing(), n_threads=1)
        four = msl_loglik(truth, panel, small_mixing(), n_threads=4)
        assert one == four
        g1 = msl_gradient(truth, panel, small_mixing(), n_threads=1)
        g4 = msl_gradient(truth, panel, small_mixing(), n_threads=4)
        np.testing.assert_array_equal(g1, g4)

    def test_bad_thread_env(self, mixed_panel40, monkeypatch):
        monkeypatch.setenv("DCE_THREADS", "zero")
        with pytest.raises(EstimationError) as err:
            msl_loglik(mixed_panel40["truth"], mixed_panel40["panel"],
                       small_mixing())
        assert err.value.code == "bad_thread_count"


class TestGradient:
    def test_matches_finite_differences(self, panel50, rng):
        panel = panel50["panel"]
        mixing = small_mixing(n_draws=16)
        for _ in range(10):
            x = np.concatenate([rng.normal(scale=0.4, size=38),
                                rng.uniform(0.2, 1.5, size=2)])
            g = msl_gradient(x, panel, mixing)
            fd = finite_diff_grad(lambda v: msl_loglik(v, panel, mixing), x)
            denom = max(1.0, float(np.max(np.abs(fd))))
            assert np.max(np.abs(g - fd)) / denom < 1e-5

    def test_parameter_count_checked(self, panel50):
        with pytest.raises(EstimationError) as err:
            msl_loglik(np.zeros(39), panel50["panel"], small_mixing())
        assert err.value.code == "parameter_mismatch"

    def test_draw_shape_checked(self, panel50):
        bad = np.zeros((50, 10, 3))
        with pytest.raises(EstimationError) as err:
            msl_loglik(np.zeros(40), panel50["panel"], small_mixing(),
                       draws=bad)
        assert err.value.code == "draw_shape_mismatch"


@pytest.fixture(scope="module")
def fitted(mixed_panel40):
    return estimate_mmnl(mixed_panel40["panel"], small_mixing(n_draws=100))


class TestEstimation:
    def test_converges_with_positive_sds(self, fitted):
        assert fitted.converged
        assert fitted.model == "mmnl"
        assert np.all(fitted.params[-2:] > 0)
        assert fitted.mixing.n_draws == 100
        assert fitted.mixing.random_params == ASC_MIX

    def test_heterogeneity_detected_by_lr(self, fitted, mixed_panel40):
        mnl = estimate_mnl(mixed_panel40["panel"])
        test = lr_test(mnl.ll_final, fitted.ll_final, df=2)
        assert test.statistic > 5.99
        assert test.p_value < 0.05

    def test_trace_is_non_decreasing(self, fitted):
        ll = fitted.trace.ll
        assert len(ll) >= 2
        assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:]))
        assert ll[-1] == pytest.approx(fitted.ll_final, abs=1e-6)

    def test_sds_near_truth(self, fitted, mixed_panel40):
        truth = mixed_panel40["truth"]
        sd_hat = fitted.params[-2:]
        se = fitted.std_errors[-2:]
        assert np.all(np.abs(sd_hat - truth[-2:]) <= 3.5 * se)

    def test_index_names_panel_mismatch(self, panel50):
        panel = panel50["panel"]
        other = small_mixing()
        # the panel's index has no sd entries; estimate_mmnl builds its own
        # and cross-checks the fixed part, so a doctored panel index fails
        res_index = build_parameter_index(panel.schema, ASC_MIX)
        assert list(res_index.names()[:38]) == list(panel.index.names())


class TestPredict:
    def test_rows_on_simplex(self, panel50):
        panel = panel50["panel"]
        truth = panel50["truth"]
        rows = panel.X[:3]
        params = np.concatenate([truth, [0.8, 0.6]])
        p = mmnl_predict(params, rows, small_mixing(), n_draws=200,
                         index=panel.index)
        assert p.shape == (3,)
        assert p.sum() == pytest.approx(1.0, abs=1e-10)

    def test_zero_random_params_is_mnl(self, panel50):
        panel = panel50["panel"]
        truth = panel50["truth"]
        rows = panel.X[:3]
        mixing = MixingSpec(random_params=())
        p = mmnl_predict(truth, rows, mixing, n_draws=50)
        np.testing.assert_allclose(p, mnl_probabilities(truth, rows),
                                   atol=1e-12)

    def test_missing_index(self, panel50):
        truth = panel50["truth"]
        params = np.concatenate([truth, [0.8, 0.6]])
        with pytest.raises(EstimationError) as err:
            mmnl_predict(params, panel50["panel"].X[:3], small_mixing(),
                         n_draws=50)
        assert err.value.code == "missing_index"
