"""
Tests for the SAPG schedules, drifts, iterations, trace and runner
"""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.optimize import minimize

from core.errors import ConfigError, HomogeneityMismatchError
from core.likelihoods import GaussianObservation, gaussian_likelihood
from core.models import Block, PosteriorModel, ThetaDomain
from core.regularisers import block_l1_regulariser, l1_regulariser, quadratic_regulariser
from experiments.config import validate_config
from experiments.problems import build_problem
from oracle.closed_form import gaussian_marginal_mle
from sapg.algorithms import SapgState, UnknownNoiseModel, ascent_step, require_homogeneity, sigma_ascent
from sapg.drift import grad_logz_drift_homogeneous, grad_logz_drift_separable
from sapg.runner import SapgConfig, SapgRunner, run_sapg
from sapg.schedules import (
    StepSchedule,
    StopRule,
    WeightScheme,
    project_theta,
    relative_change,
    stop_check,
    weighted_average,
)
from sapg.trace import ThetaTrace, grad_residual_windows


def _state(theta=1.0, log_scale=False, sigma2=None, sigma_log_scale=False):
    return SapgState(
        theta=[theta],
        chains={},
        trace=ThetaTrace(1, WeightScheme(), track_sigma=sigma2 is not None),
        log_scale=log_scale,
        sigma2=sigma2,
        sigma_log_scale=sigma_log_scale,
    )


def _gaussian_toy(dim=500, true_theta=0.5, seed=21):
    """y = x + N(0, 1) with x ~ N(0, I / (2 theta)); the prior enters through its gradient"""
    rng = np.random.default_rng(seed)
    y = np.sqrt(1.0 + 1.0 / (2.0 * true_theta)) * rng.standard_normal(dim)
    model = PosteriorModel(
        likelihood=gaussian_likelihood(y, 1.0),
        regulariser=quadratic_regulariser((dim,), as_gradient=True),
        theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]),
        shape=(dim,),
        name="gaussian-toy",
    )
    return model, y


class TestSchedules:
    """Step sizes, weights and stopping"""

    def test_step_value(self):
        assert StepSchedule(2.0, 0.8)(32) == pytest.approx(0.125)

    def test_step_rejects_bad_input(self):
        with pytest.raises(ValueError):
            StepSchedule(1.0, 0.5)
        with pytest.raises(ValueError):
            StepSchedule(0.0)
        with pytest.raises(ValueError):
            StepSchedule(1.0)(0)

    def test_default_c0(self):
        assert StepSchedule.default_for([0.5, 0.1], 100).c0 == pytest.approx(0.1)

    def test_step_scales(self):
        schedule = StepSchedule(1.0, scale=[2.0])
        np.testing.assert_array_equal(schedule.scales(3), [2.0, 2.0, 2.0])
        with pytest.raises(ValueError):
            StepSchedule(1.0, scale=[1.0, 2.0]).scales(3)

    def test_weights(self):
        scheme = WeightScheme(n0=2, n1=3, tail="decreasing", tail_c0=1.0, tail_exponent=1.0)
        np.testing.assert_allclose(scheme.weights(5), [0.0, 0.0, 1.0, 1.0, 0.25])
        assert WeightScheme(n0=2, n1=3).weight(10) == 1.0
        with pytest.raises(ValueError):
            WeightScheme(n0=3, n1=3)

    def test_weighted_average(self):
        thetas = np.array([[1.0], [2.0], [3.0]])
        assert weighted_average(thetas, WeightScheme(n0=1))[0] == pytest.approx(2.5)
        assert weighted_average(thetas, WeightScheme(n0=1), upto=2)[0] == pytest.approx(2.0)

    def test_weighted_average_all_zero(self):
        with pytest.raises(ValueError):
            weighted_average(np.ones((3, 1)), WeightScheme(n0=5))

    def test_stop_check(self):
        rule = StopRule(tol=1e-3, max_iters=100)
        assert stop_check(np.array([[1.0], [1.0005]]), rule)
        assert not stop_check(np.array([[1.0], [1.01]]), rule)
        assert stop_check(np.array([[np.nan], [1.0], [1.0]]), rule)
        assert not stop_check(np.array([[np.nan], [1.0]]), rule)

    def test_stop_check_budget(self):
        assert stop_check(np.linspace(1.0, 2.0, 11), StopRule(tol=1e-9, max_iters=10))

    def test_relative_change_is_infinity_norm(self):
        assert relative_change(np.array([1.0, 2.0]), np.array([1.1, 2.0])) == pytest.approx(0.1)

    def test_project_theta(self):
        domain = ThetaDomain(lower=[0.1, 0.1], upper=[10.0, 10.0])
        np.testing.assert_allclose(project_theta([0.01, 50.0], domain), [0.1, 10.0])
        np.testing.assert_allclose(project_theta([-1.0, 5.0], domain, log_scale=True), [0.1, 5.0])


class TestDrift:
    """Closed-form log-partition gradients"""

    def test_homogeneous(self):
        assert grad_logz_drift_homogeneous(4, 1.0, 2.0)[0] == pytest.approx(2.0)
        assert grad_logz_drift_homogeneous(10, 2.0, 5.0)[0] == pytest.approx(1.0)

    def test_separable(self):
        np.testing.assert_allclose(grad_logz_drift_separable([(3, 1.0), (5, 1.0)], [1.0, 2.5]), [3.0, 2.0])
        blocks = [Block(np.arange(4), alpha=2.0), Block(np.arange(4, 6))]
        np.testing.assert_allclose(grad_logz_drift_separable(blocks, [1.0, 1.0]), [2.0, 2.0])

    def test_invalid(self):
        with pytest.raises(ValueError):
            grad_logz_drift_homogeneous(4, 0.0, 1.0)
        with pytest.raises(ValueError):
            grad_logz_drift_homogeneous(4, 1.0, -1.0)
        with pytest.raises(ValueError):
            grad_logz_drift_separable([(3, 1.0)], [1.0, 2.0])


class TestAscent:
    """Single projected ascent moves"""

    DOMAIN = ThetaDomain(lower=[1e-3], upper=[1e3])

    def test_plain_step(self):
        delta, theta = ascent_step(_state(1.0), self.DOMAIN, np.array([1.0]), StepSchedule(0.1))
        assert delta == pytest.approx(0.1)
        assert theta[0] == pytest.approx(1.1)

    def test_log_scale_step(self):
        state = _state(1.0, log_scale=True)
        _, theta = ascent_step(state, self.DOMAIN, np.array([1.0]), StepSchedule(0.1))
        assert theta[0] == pytest.approx(np.exp(0.1))
        assert state.eta[0] == pytest.approx(0.1)

    def test_step_index_follows_iteration(self):
        state = _state(1.0)
        state.iteration = 31
        delta, _ = ascent_step(state, self.DOMAIN, np.array([0.0]), StepSchedule(2.0, 0.8))
        assert delta == pytest.approx(0.125)

    def test_saturation_is_recorded(self):
        state = _state(1.0)
        _, theta = ascent_step(state, self.DOMAIN, np.array([1e6]), StepSchedule(0.1))
        assert theta[0] == 1e3
        assert state.trace.saturations[0].bound == "upper"

    def test_sigma_ascent(self):
        state = _state(1.0, sigma2=1.0)
        assert sigma_ascent(state, 1.0, StepSchedule(0.1), (0.5, 2.0)) == pytest.approx(1.1)
        assert sigma_ascent(state, 100.0, StepSchedule(0.1), (0.5, 2.0)) == 2.0
        assert state.trace.saturations[-1].parameter == "sigma2"

    def test_sigma_ascent_log_scale(self):
        state = _state(1.0, sigma2=2.0, sigma_log_scale=True)
        value = sigma_ascent(state, 0.5, StepSchedule(0.1), (0.5, 4.0))
        assert value == pytest.approx(2.0 * np.exp(0.1))


class TestThetaTrace:
    """Per-iteration record"""

    def test_running_average_and_frame(self):
        trace = ThetaTrace(1, WeightScheme(n0=1))
        for n, theta in enumerate([1.0, 2.0, 3.0]):
            trace.record([theta], delta=0.1 * n, grad=[1.0], g_mean=[4.0])
        assert np.isnan(trace.theta_bars[0][0])
        assert trace.theta_bar[0] == pytest.approx(2.5)
        assert trace.iterations == 2
        frame = trace.to_frame()
        assert list(frame.columns) == ["n", "delta_n", "theta_1", "theta_bar_1", "grad_norm", "g_1", "stage"]
        assert frame["n"].tolist() == [0, 1, 2]

    def test_sigma_columns(self):
        trace = ThetaTrace(2, WeightScheme(), track_sigma=True, stage=3)
        trace.record([1.0, 2.0], sigma2=0.5)
        trace.record([1.0, 2.0], sigma2=1.5)
        frame = trace.to_frame()
        assert {"theta_bar_2", "sigma2", "sigma2_bar"} <= set(frame.columns)
        assert trace.sigma2_bar == pytest.approx(1.0)
        assert frame["stage"].unique().tolist() == [3]

    def test_saturation_runs(self):
        trace = ThetaTrace(1, WeightScheme())
        trace.record([1.0])
        trace.flag_saturation("theta", "lower", 1e-3)
        trace.record([1e-3])
        trace.flag_saturation("theta", "lower", 1e-3)
        assert [s.n for s in trace.saturations] == [1, 2]
        assert trace.saturations[0].to_dict()["parameter"] == "theta"

    def test_grad_residual_windows(self):
        frame = grad_residual_windows(np.ones(120), window=50)
        assert frame["window_start"].tolist() == [0, 50]
        assert frame["mean_grad_norm"].tolist() == [1.0, 1.0]


class TestSapgConfig:
    """Validation of the tuning knobs"""

    @pytest.mark.parametrize("kwargs", [
        {"exponent": 0.95},
        {"c0": 1.0, "c0_over_dim": 1.0},
        {"n0": 5, "n1": 5},
        {"theta_lower": [2.0], "theta_upper": [1.0]},
        {"theta_lower": [0.0]},
        {"sigma2_min": 2.0, "sigma2_max": 1.0},
        {"m_n": 0},
        {"posterior_thinning": 0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValidationError):
            SapgConfig(**kwargs)

    def test_scalars_broadcast(self):
        config = SapgConfig(theta0=0.5, theta_lower=1e-2, theta_upper=[10.0, 20.0])
        np.testing.assert_array_equal(config.initial_theta(2), [0.5, 0.5])
        assert config.theta_domain(2).upper.tolist() == [10.0, 20.0]

    def test_schedules(self):
        assert SapgConfig(theta0=0.5).schedule(100).c0 == pytest.approx(0.02)
        assert SapgConfig(c0_over_dim=10.0).schedule(100).c0 == pytest.approx(0.1)
        assert SapgConfig(c0=3.0, sigma_c0_over_dim=5.0).sigma_schedule(10).c0 == pytest.approx(0.5)


class TestSapgRunner:
    """Short end-to-end runs"""

    def _config(self, **overrides):
        values = dict(theta0=1.0, log_scale=False, c0=0.01, n0=2, tolerance=1e-12, max_iters=15, warm_up=5)
        values.update(overrides)
        return SapgConfig(**values)

    def test_same_seed_same_trajectory(self, l1_model):
        y = np.linspace(-2.0, 2.0, 8)
        a = SapgRunner(self._config(), l1_model, x0=y, seed=5).run()
        b = SapgRunner(self._config(), l1_model, x0=y, seed=5).run()
        c = SapgRunner(self._config(), l1_model, x0=y, seed=6).run()
        np.testing.assert_array_equal(np.array(a.trace.thetas), np.array(b.trace.thetas))
        assert not np.array_equal(np.array(a.trace.thetas), np.array(c.trace.thetas))

    def test_budget_and_summary(self, l1_model):
        result = SapgRunner(self._config(), l1_model, seed=1).run()
        assert result.stopped_by == "max_iters"
        assert result.iterations == 15
        assert len(result.trace.thetas) == 16
        summary = result.summary()
        assert set(summary) == {"theta_bar", "iterations", "stopped_by", "warnings"}
        assert result.trace.check_averages()

    def test_tolerance_stop(self, l1_model):
        result = SapgRunner(self._config(c0=1e-6, n0=0, tolerance=0.5, max_iters=100), l1_model, seed=1).run()
        assert result.stopped_by == "tolerance"
        assert result.iterations < 100

    def test_degenerate_domain(self):
        y = np.linspace(-1.0, 1.0, 6)
        model = PosteriorModel(
            likelihood=gaussian_likelihood(y, 0.5),
            regulariser=l1_regulariser((6,)),
            theta_domain=ThetaDomain(lower=[0.7], upper=[0.7]),
            shape=(6,),
        )
        theta_bar, trace = run_sapg(self._config(log_scale=True), model, data=y, seed=2)
        assert theta_bar[0] == pytest.approx(0.7)
        assert np.all(np.array(trace.thetas) == 0.7)

    def test_single_block_matches_homogeneous(self):
        y = np.linspace(-2.0, 2.0, 8)
        common = dict(likelihood=gaussian_likelihood(y, 0.5),
                      theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]), shape=(8,))
        homogeneous = PosteriorModel(regulariser=l1_regulariser((8,)), **common)
        blocked = PosteriorModel(regulariser=block_l1_regulariser((8,), [Block(np.arange(8))]), **common)
        a = SapgRunner(self._config(algorithm="alg1"), homogeneous, x0=y, seed=3).run()
        b = SapgRunner(self._config(algorithm="alg2"), blocked, x0=y, seed=3).run()
        np.testing.assert_array_equal(np.array(a.trace.thetas), np.array(b.trace.thetas))
        np.testing.assert_array_equal(a.state.posterior.x, b.state.posterior.x)

    def test_alg3_thins_both_chains(self, l1_model):
        y = np.linspace(-2.0, 2.0, 8)
        plain = SapgRunner(self._config(algorithm="alg3"), l1_model, x0=y, seed=3).run()
        thinned = SapgRunner(self._config(algorithm="alg3", posterior_thinning=3, prior_thinning=2),
                             l1_model, x0=y, seed=3).run()
        assert thinned.state.posterior.step_count - plain.state.posterior.step_count == 2 * 15
        assert thinned.state.prior.step_count - plain.state.prior.step_count == 1 * 15

    def test_homogeneity_mismatch(self, l1_model):
        with pytest.raises(HomogeneityMismatchError):
            SapgRunner(self._config(algorithm="alg2"), l1_model)
        general = PosteriorModel(
            likelihood=gaussian_likelihood(np.zeros(4), 1.0),
            regulariser=l1_regulariser((4,), ridge=0.5),
            theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]),
            shape=(4,),
        )
        with pytest.raises(HomogeneityMismatchError):
            require_homogeneity(general.regulariser, "alg1")
        require_homogeneity(general.regulariser, "alg3")

    def test_unstable_gamma(self, l1_model):
        with pytest.raises(ConfigError):
            SapgRunner(self._config(gamma=10.0), l1_model).run()

    def test_unknown_noise_needs_bounds(self):
        problem = UnknownNoiseModel(
            observation=GaussianObservation(y=np.ones(4)),
            regulariser=l1_regulariser((4,)),
            theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]),
            shape=(4,),
        )
        with pytest.raises(ConfigError):
            SapgRunner(self._config(algorithm="alg4"), problem)

    def test_alg4_needs_unknown_noise_model(self, l1_model):
        with pytest.raises(TypeError):
            SapgRunner(self._config(algorithm="alg4", sigma2_min=0.1, sigma2_max=1.0), l1_model)

    def test_three_stage_history(self):
        rng = np.random.default_rng(8)
        y = rng.normal(size=64)
        problem = UnknownNoiseModel(
            observation=GaussianObservation(y=y),
            regulariser=l1_regulariser((64,)),
            theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]),
            shape=(64,),
        )
        config = self._config(algorithm="alg4", sigma2_min=0.05, sigma2_max=5.0, sigma2_0=1.0,
                              stages=2, max_iters=30, c0_over_dim=1.0, c0=None, sigma_c0_over_dim=1.0)
        result = SapgRunner(config, problem, x0=y, seed=4).run()
        history = result.state.stage_history
        assert [h["stage"] for h in history] == [1, 2]
        assert history[0]["lipschitz"] == pytest.approx(1.0 / 0.05)
        # the first stage sizes the kernel for the smallest admissible variance
        assert history[0]["gamma"] <= history[1]["gamma"]
        assert [t.stage for t in result.traces] == [1, 2]
        assert result.iterations == 60
        assert 0.05 <= result.sigma2_bar <= 5.0
        assert "stages" in result.summary()


@pytest.mark.slow
class TestStatisticalAccuracy:
    """Long runs against closed-form and numerical maximum marginal likelihood"""

    def test_homogeneous_drift_matches_marginal_mle(self):
        model, y = _gaussian_toy()
        config = SapgConfig(algorithm="alg1", theta0=0.2, log_scale=True, c0_over_dim=1.0,
                            gamma=0.02, lam=1.0, n0=200, tolerance=1e-12, max_iters=3000, warm_up=200)
        theta_bar, _ = run_sapg(config, model, data=y, seed=17)
        assert theta_bar[0] == pytest.approx(gaussian_marginal_mle(y, 1.0), rel=0.05)

    def test_prior_chain_matches_marginal_mle(self):
        model, y = _gaussian_toy()
        config = SapgConfig(algorithm="alg3", theta0=0.2, log_scale=True, c0_over_dim=1.0,
                            gamma=0.02, lam=1.0, prior_lam=0.02, n0=500, tolerance=1e-12,
                            max_iters=6000, warm_up=200)
        theta_bar, _ = run_sapg(config, model, data=y, seed=18)
        assert theta_bar[0] == pytest.approx(gaussian_marginal_mle(y, 1.0), rel=0.05)

    def test_joint_noise_estimate(self):
        rng = np.random.default_rng(31)
        dim, true_theta, true_sigma2 = 4000, 0.5, 0.5
        a = rng.uniform(0.3, 2.0, size=dim)
        x = rng.standard_normal(dim) / np.sqrt(2.0 * true_theta)
        y = a * x + np.sqrt(true_sigma2) * rng.standard_normal(dim)

        def negative_log_marginal(params):
            theta, sigma2 = np.exp(params)
            var = a * a / (2.0 * theta) + sigma2
            return 0.5 * np.sum(np.log(var) + y * y / var)

        theta_mle, sigma2_mle = np.exp(minimize(negative_log_marginal, [0.0, 0.0], method="Nelder-Mead",
                                                options={"xatol": 1e-8, "fatol": 1e-10}).x)
        problem = UnknownNoiseModel(
            observation=GaussianObservation(y=y, forward=lambda v: a * v, adjoint=lambda v: a * v,
                                            op_norm_sq=float(np.max(a) ** 2)),
            regulariser=quadratic_regulariser((dim,), as_gradient=True),
            theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]),
            shape=(dim,),
        )
        config = SapgConfig(algorithm="alg4", theta0=1.0, log_scale=True, c0_over_dim=1.0,
                            gamma=0.01, lam=1.0, sigma2_0=1.0, sigma2_min=0.05, sigma2_max=5.0,
                            sigma_c0_over_dim=1.0, sigma_log_scale=True, stages=2,
                            n0=300, tolerance=1e-12, max_iters=1500, warm_up=200)
        result = SapgRunner(config, problem, x0=y / a, seed=19).run()
        assert result.sigma2_bar == pytest.approx(sigma2_mle, rel=0.15)
        assert result.theta_bar[0] == pytest.approx(theta_mle, rel=0.15)


def _synthesis_denoising(seed, size=64, snr_db=30.0, noise="gaussian", likelihood="gaussian", **sapg):
    """Haar-coefficient denoising with Laplace(theta = 1) coefficients, one SAPG run"""
    settings = dict(theta0=0.5, theta_lower=1e-3, theta_upper=1e3, log_scale=False,
                    n0=100, tolerance=1e-12, max_iters=400, warm_up=50)
    settings.update(sapg)
    config = validate_config({
        "problem": "denoise_synthesis_l1",
        "input": {"size": [size, size], "true_theta": 1.0},
        "noise": {"kind": noise, "snr_db": snr_db},
        "model": {"wavelet": "orthogonal", "levels": 4, "likelihood": likelihood},
        "sapg": settings,
    })
    problem = build_problem(config, np.random.SeedSequence(seed))
    return SapgRunner(config.sapg, problem.model, x0=problem.x0, seed=seed).run()


@pytest.mark.slow
class TestDenoisingBenchmarks:
    """Scaled-down synthetic denoising runs with a known generating theta"""

    # log-scale steps of size 0.5 * n^-0.6 in eta, whatever theta0
    ROBUST = dict(log_scale=True, c0_over_dim=0.5, exponent=0.6, n0=750, max_iters=1500)

    def test_recovers_generating_theta(self):
        theta_bars = [_synthesis_denoising(seed, size=128).theta_bar[0] for seed in range(3)]
        assert 0.97 <= np.mean(theta_bars) <= 1.03

    def test_stops_quickly_at_default_tolerance(self):
        iterations = [_synthesis_denoising(seed, n0=5, tolerance=1e-3, max_iters=500).iterations
                      for seed in range(3)]
        assert np.median(iterations) <= 60

    def test_gaussian_likelihood_under_laplace_noise(self):
        def mean_estimate(likelihood):
            return np.mean([_synthesis_denoising(seed, snr_db=40.0, noise="laplace", likelihood=likelihood,
                                                 theta0=1.0).theta_bar[0] for seed in range(3)])

        assert mean_estimate("gaussian") == pytest.approx(mean_estimate("laplace"), rel=0.05)

    def test_robust_to_initial_theta(self):
        estimates = [_synthesis_denoising(7, theta0=theta0, **self.ROBUST).theta_bar[0] for theta0 in (0.1, 1.0, 10.0)]
        assert max(estimates) / min(estimates) - 1.0 < 0.05

    def test_log_and_linear_scale_agree(self):
        log_scale = _synthesis_denoising(7, theta0=1.0, **self.ROBUST).theta_bar[0]
        linear = _synthesis_denoising(7, theta0=1.0, n0=750, max_iters=1500).theta_bar[0]
        assert linear == pytest.approx(log_scale, rel=0.03)

    def test_gradient_residual_decays(self):
        result = _synthesis_denoising(9, theta0=0.2, **dict(self.ROBUST, n0=250, max_iters=500))
        means = grad_residual_windows(result.trace.grad_norms(), window=50, start=1)["mean_grad_norm"].to_numpy()
        assert len(means) == 10
        assert means[-1] < 0.1 * means[0]
        # non-increasing up to the stationary noise level
        assert np.all(np.diff(means) <= means.min())


@pytest.mark.slow
class TestTwoChainEquivalence:
    def test_alg3_matches_alg1_on_l1(self):
        """alg3 with a tiny ridge term, making the prior strongly log-concave, against alg1 on plain l1"""
        dim = 256
        rng = np.random.default_rng(5)
        y = rng.laplace(0.0, 1.0, dim) + 0.1 * rng.standard_normal(dim)
        common = dict(likelihood=gaussian_likelihood(y, 0.01),
                      theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]), shape=(dim,))
        settings = dict(theta0=1.0, log_scale=True, c0_over_dim=0.5, exponent=0.6,
                        n0=5000, tolerance=1e-12, max_iters=20000, warm_up=200)
        one_chain, _ = run_sapg(SapgConfig(algorithm="alg1", **settings),
                                PosteriorModel(regulariser=l1_regulariser((dim,)), **common), data=y, seed=12)
        two_chain, _ = run_sapg(SapgConfig(algorithm="alg3", prior_lam=0.02, **settings),
                                PosteriorModel(regulariser=l1_regulariser((dim,), ridge=1e-3), **common),
                                data=y, seed=12)
        assert two_chain[0] == pytest.approx(one_chain[0], rel=0.05)
