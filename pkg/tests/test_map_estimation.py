"""
Tests for the MAP solver
"""

import numpy as np
import pytest

from core.likelihoods import gaussian_likelihood
from core.models import PosteriorModel, ThetaDomain
from core.regularisers import (
    elastic_net_regulariser,
    l1_regulariser,
    quadratic_regulariser,
    tv_regulariser,
    zero_regulariser,
)
from map_estimation.solver import evaluate, solve_map, stationarity_residual
from prox.operators import soft_threshold
from transforms.blur import uniform_blur
from transforms.metrics import PSNR_SENTINEL


@pytest.fixture
def deblur_tv_model():
    rng = np.random.default_rng(2)
    truth = np.zeros((16, 16))
    truth[4:12, 5:10] = 1.0
    blur = uniform_blur((16, 16), 3)
    y = blur.apply(truth) + 0.05 * rng.standard_normal((16, 16))
    model = PosteriorModel(
        likelihood=gaussian_likelihood(y, 0.0025, blur.apply, blur.adjoint, blur.op_norm_sq),
        regulariser=tv_regulariser((16, 16)),
        theta_domain=ThetaDomain(lower=[1e-3], upper=[1e4]),
        shape=(16, 16),
    )
    return model, y


class TestSolveMap:
    def test_zero_regulariser_returns_data(self):
        y = np.array([1.0, -3.0, 0.5])
        model = PosteriorModel(
            likelihood=gaussian_likelihood(y, 0.2),
            regulariser=zero_regulariser((3,)),
            theta_domain=ThetaDomain(lower=[1.0], upper=[1.0]),
            shape=(3,),
        )
        result = solve_map(model, [1.0])
        assert result.converged
        np.testing.assert_allclose(result.x_hat, y, atol=1e-10)

    def test_l1_denoising_is_soft_threshold(self, l1_model):
        y = np.linspace(-2.0, 2.0, 8)
        result = solve_map(l1_model, [1.0], y=y)
        assert result.converged
        np.testing.assert_allclose(result.x_hat, soft_threshold(y, 0.5), atol=1e-8)
        assert stationarity_residual(l1_model, result.x_hat, [1.0], 0.5) < 1e-10

    def test_smooth_regulariser(self):
        y = np.array([2.0, -1.0, 4.0])
        theta, sigma2 = 1.5, 0.5
        model = PosteriorModel(
            likelihood=gaussian_likelihood(y, sigma2),
            regulariser=quadratic_regulariser((3,), as_gradient=True),
            theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]),
            shape=(3,),
        )
        result = solve_map(model, [theta], tol=1e-10, max_iters=2000, smooth_lipschitz=2 * theta)
        assert result.converged
        np.testing.assert_allclose(result.x_hat, y / (1 + 2 * theta * sigma2), atol=1e-8)

    def test_stiff_smooth_part_sizes_the_step(self):
        y = np.array([3.0, -0.05, 1.0, -2.0])
        theta = [0.1, 50.0]
        model = PosteriorModel(
            likelihood=gaussian_likelihood(y, 1.0),
            regulariser=elastic_net_regulariser((4,)),
            theta_domain=ThetaDomain(lower=[1e-3, 1e-3], upper=[1e3, 1e3]),
            shape=(4,),
        )
        result = solve_map(model, theta, y=y, tol=1e-10, max_iters=500)
        assert result.converged
        np.testing.assert_allclose(result.x_hat, soft_threshold(y, 0.1) / 51.0, atol=1e-8)

    def test_smooth_lipschitz_from_regulariser(self):
        assert elastic_net_regulariser((3,)).smooth_lipschitz_at([0.2, 7.0]) == 7.0
        assert quadratic_regulariser((3,), as_gradient=True).smooth_lipschitz_at([1.5]) == 3.0
        assert quadratic_regulariser((3,)).smooth_lipschitz_at([1.5]) == 0.0
        assert l1_regulariser((3,)).smooth_lipschitz_at([1.5]) == 0.0

    def test_objective_is_monotone(self, deblur_tv_model):
        model, y = deblur_tv_model
        result = solve_map(model, [20.0], y=y, tol=1e-8, max_iters=150)
        assert np.all(np.diff(result.objective_trace) <= 1e-12)
        assert result.objective_trace[-1] < result.objective_trace[0]
        assert len(result.objective_trace) == result.iterations + 1

    def test_budget_reports_not_converged(self, deblur_tv_model):
        model, y = deblur_tv_model
        result = solve_map(model, [20.0], y=y, tol=1e-14, max_iters=2)
        assert not result.converged
        assert result.iterations == 2
        assert result.residual > 1e-14


class TestEvaluate:
    def test_metrics(self):
        ref = np.zeros((4, 4))
        scores = evaluate(ref + 0.1, ref)
        assert scores["mse_db"] == pytest.approx(-20.0)
        assert scores["psnr"] == pytest.approx(20.0)

    def test_exact(self):
        ref = np.ones(3)
        assert evaluate(ref, ref)["psnr"] == PSNR_SENTINEL
