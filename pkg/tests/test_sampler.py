"""
Tests for the MYULA kernels and chain diagnostics
"""

import numpy as np
import pytest

from core.errors import ConfigError, DivergenceError
from core.likelihoods import gaussian_likelihood
from core.models import PosteriorModel, ThetaDomain
from core.regularisers import l1_regulariser
from oracle.closed_form import ula_gaussian_stationary_variance
from oracle.quadrature import adaptive_grid, quadrature_log_z
from sampler.diagnostics import (
    autocorrelation,
    chain_trace_frame,
    effective_sample_size,
    imbalance_ratio,
    integrated_autocorr_time,
    is_stabilised,
    log_prob_trace,
)
from sampler.myula import (
    PRIOR,
    ChainState,
    KernelParams,
    check_stability,
    myula_posterior_step,
    myula_prior_step,
    posterior_kernel_params,
    prior_kernel_params,
    run_chain,
    warm_up,
)


def _ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.standard_normal()
    return x


class TestKernelParams:
    """Step size and smoothing defaults"""

    def test_default_rules(self):
        params = posterior_kernel_params(4.0)
        assert params.lam == pytest.approx(0.25)
        assert params.gamma == pytest.approx(0.98 / 8.0)

    def test_lam_capped(self):
        params = posterior_kernel_params(0.1, lam_factor=5.0, lam_max=2.0)
        assert params.lam == pytest.approx(2.0)

    def test_explicit_values_win(self):
        params = posterior_kernel_params(4.0, lam=1.0, gamma=0.01)
        assert (params.gamma, params.lam) == (0.01, 1.0)

    def test_prior_params(self):
        params = prior_kernel_params(0.5, gamma_factor=0.9)
        assert params.gamma == pytest.approx(0.45)
        assert params.is_prior_stable()

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            KernelParams(gamma=0.0, lam=1.0)
        with pytest.raises(ValueError):
            KernelParams(gamma=0.1, lam=-1.0)
        with pytest.raises(ValueError):
            posterior_kernel_params(0.0)

    def test_stability_enforced(self):
        params = KernelParams(gamma=1.0, lam=1.0)
        with pytest.raises(ConfigError) as info:
            check_stability(params, lipschitz=1.0)
        assert info.value.errors[0][0] == "sapg.gamma"

    def test_stability_warning_only(self):
        params = KernelParams(gamma=1.0, lam=1.0)
        assert check_stability(params, lipschitz=1.0, enforce=False) is False
        assert check_stability(KernelParams(gamma=0.4, lam=1.0), lipschitz=1.0)

    def test_prior_stability(self):
        with pytest.raises(ConfigError):
            check_stability(KernelParams(gamma=2.0, lam=1.0), chain="prior", field_path="sapg.prior_gamma")


class TestTransitions:
    """Single MYULA steps"""

    def test_prior_step_without_noise_on_flat_model(self, flat_model):
        model = flat_model(4)
        x0 = np.array([1.0, -2.0, 0.5, 3.0])
        state = ChainState.start(x0, seed=0)
        myula_prior_step(model, state, [1.0], KernelParams(gamma=0.1, lam=1.0), noise=np.zeros(4))
        np.testing.assert_allclose(state.x, x0)
        assert state.step_count == 1

    def test_posterior_step_without_noise_contracts(self, flat_model):
        model = flat_model(4)
        x0 = np.array([1.0, -2.0, 0.5, 3.0])
        state = ChainState.start(x0, seed=0)
        myula_posterior_step(model, state, [1.0], KernelParams(gamma=0.1, lam=1.0), noise=np.zeros(4))
        np.testing.assert_allclose(state.x, 0.9 * x0)

    def test_l1_step_without_noise(self, l1_model):
        x0 = np.linspace(-2.0, 2.0, 8)
        state = ChainState.start(x0, seed=0)
        params = KernelParams(gamma=0.1, lam=0.5)
        myula_posterior_step(l1_model, state, [1.0], params, noise=np.zeros(8))
        moreau = (x0 - np.sign(x0) * np.maximum(np.abs(x0) - 0.5, 0.0)) / 0.5
        np.testing.assert_allclose(state.x, x0 - 0.1 * moreau)

    def test_start_copies_input(self):
        x0 = np.zeros(3)
        state = ChainState.start(x0, seed=1)
        state.x[0] = 5.0
        assert x0[0] == 0.0

    def test_divergence_detected(self, flat_model):
        model = flat_model(4)
        state = ChainState.start(np.full(4, 1e300), seed=0)
        with pytest.raises(DivergenceError) as info:
            for _ in range(10):
                myula_posterior_step(model, state, [1.0], KernelParams(gamma=1e10, lam=1.0))
        assert info.value.chain == "posterior"
        assert info.value.to_dict()["gamma"] == 1e10

    def test_same_seed_same_chain(self, l1_model):
        params = posterior_kernel_params(l1_model.likelihood.lipschitz)
        runs = []
        for _ in range(2):
            state = ChainState.start(np.zeros(8), seed=42)
            runs.append(run_chain(l1_model, state, [1.0], params, steps=20)[0].x)
        np.testing.assert_array_equal(runs[0], runs[1])


class TestChains:
    """Warm-up and recording"""

    def test_warm_up_zero_steps_only_marks(self, l1_model):
        state = ChainState.start(np.ones(8), seed=3)
        warm_up(l1_model, state, [1.0], KernelParams(gamma=0.1, lam=0.5), t0=0)
        assert state.warm
        assert state.step_count == 0
        np.testing.assert_array_equal(state.x, np.ones(8))

    def test_warm_up_rejects_negative(self, l1_model):
        with pytest.raises(ValueError):
            warm_up(l1_model, ChainState.start(np.ones(8), seed=3), [1.0], KernelParams(0.1, 0.5), t0=-1)

    def test_thinning(self, l1_model):
        state = ChainState.start(np.zeros(8), seed=3)
        state, samples = run_chain(l1_model, state, [1.0], KernelParams(0.1, 0.5), steps=12, thinning=6)
        assert len(samples) == 2
        assert state.step_count == 12
        np.testing.assert_array_equal(samples[-1], state.x)

    def test_record_hook(self, l1_model):
        state = ChainState.start(np.zeros(8), seed=3)
        _, samples = run_chain(l1_model, state, [1.0], KernelParams(0.1, 0.5), steps=5,
                               record=l1_model.regulariser.statistics)
        assert len(samples) == 5
        assert samples[0].shape == (1,)

    def test_unknown_target(self, l1_model):
        with pytest.raises(ValueError):
            run_chain(l1_model, ChainState.start(np.zeros(8), seed=3), [1.0], KernelParams(0.1, 0.5),
                      steps=1, target="marginal")

    @pytest.mark.slow
    @pytest.mark.parametrize("gamma", [0.05, 0.1, 0.2])
    def test_ula_stationary_variance(self, flat_model, gamma):
        """f = ||x||^2 / 2 and g = 0: ULA's stationary variance is 1 / (1 - gamma / 2)"""
        coords = 4000
        model = flat_model(coords)
        expected = ula_gaussian_stationary_variance(gamma, 1.0)
        rng = np.random.default_rng(9)
        state = ChainState.start(np.sqrt(expected) * rng.standard_normal(coords), rng)
        params = KernelParams(gamma=gamma, lam=1.0)
        warm_up(model, state, [1.0], params, t0=int(20 / gamma))
        _, moments = run_chain(model, state, [1.0], params, steps=2500, record=lambda x: np.mean(x * x))
        # the bias 1 / (1 - gamma / 2) - 1 is at least 2.5%, so 1% separates it from the exact variance
        assert np.mean(moments) == pytest.approx(expected, rel=0.01)
        assert abs(np.mean(moments) - 1.0) > 0.01

    @pytest.mark.slow
    def test_prior_chain_mean_matches_quadrature(self):
        """g = ||x||_1 + ||x||^2 / 2 at theta = 1: a chain over 1000 independent pairs against 2-D quadrature"""
        def g(points):
            return np.sum(np.abs(points), axis=1) + 0.5 * np.sum(points * points, axis=1)

        grid = adaptive_grid(lambda p: -g(p), 2).grid
        h = 1e-4
        expected = -(quadrature_log_z(g, 1.0 + h, 2, grid) - quadrature_log_z(g, 1.0 - h, 2, grid)) / (2 * h)

        pairs = 1000
        model = PosteriorModel(
            likelihood=gaussian_likelihood(np.zeros(2 * pairs), 1.0),
            regulariser=l1_regulariser((2 * pairs,), ridge=0.5),
            theta_domain=ThetaDomain(lower=[1.0], upper=[1.0]),
            shape=(2 * pairs,),
        )
        state = ChainState.start(np.zeros(2 * pairs), seed=21)
        params = prior_kernel_params(0.005)
        warm_up(model, state, [1.0], params, t0=2000, target=PRIOR)
        _, stats = run_chain(model, state, [1.0], params, steps=4000, target=PRIOR,
                             record=model.regulariser.statistics)
        empirical = float(np.mean([s[0] for s in stats])) / pairs
        assert empirical == pytest.approx(expected, rel=0.03)


class TestDiagnostics:
    """Autocorrelation and stabilisation"""

    def test_lag_zero_is_one(self, rng):
        rho = autocorrelation(rng.normal(size=500), 10)
        assert rho[0] == pytest.approx(1.0)
        assert rho.shape == (11,)

    def test_iid_series_is_uncorrelated(self, rng):
        rho = autocorrelation(rng.normal(size=20000), 5)
        assert np.all(np.abs(rho[1:]) < 0.03)
        assert integrated_autocorr_time(rng.normal(size=20000), 50) < 1.2

    def test_ar1_lag_one(self):
        rho = autocorrelation(_ar1(0.9, 50000, seed=5), 3)
        assert rho[1] == pytest.approx(0.9, abs=0.02)

    def test_ar1_integrated_time(self):
        series = _ar1(0.5, 50000, seed=6)
        # (1 + phi) / (1 - phi)
        assert integrated_autocorr_time(series, 100) == pytest.approx(3.0, rel=0.15)
        assert effective_sample_size(series) == pytest.approx(len(series) / integrated_autocorr_time(series))

    def test_imbalance_ratio(self):
        slow, fast = _ar1(0.8, 20000, seed=1), _ar1(0.0, 20000, seed=2)
        assert imbalance_ratio(slow, fast) > 4.0

    def test_constant_series_rejected(self):
        with pytest.raises(ValueError):
            autocorrelation(np.ones(100), 5)

    def test_short_series_rejected(self, rng):
        with pytest.raises(ValueError):
            autocorrelation(rng.normal(size=5), 5)

    def test_stabilised(self):
        assert is_stabilised(np.full(40, -3.0))
        assert is_stabilised(np.concatenate([np.linspace(-100, -10, 100), np.full(100, -10.0)]))
        assert not is_stabilised(np.linspace(0.0, 1.0, 100))
        assert not is_stabilised([])

    def test_log_prob_trace_and_frame(self, l1_model):
        state = ChainState.start(np.zeros(8), seed=4)
        _, samples = run_chain(l1_model, state, [1.0], KernelParams(0.1, 0.5), steps=6, thinning=2)
        trace = log_prob_trace(l1_model, samples, [1.0])
        assert trace.values.shape == (3,)
        frame = chain_trace_frame(l1_model, samples, [1.0], thinning=2)
        assert list(frame.columns) == ["iteration", "g_1", "log_prob"]
        assert frame["iteration"].tolist() == [2, 4, 6]
        np.testing.assert_allclose(frame["log_prob"], trace.values)
