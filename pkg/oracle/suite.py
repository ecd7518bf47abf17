"""
Oracle Suite - Fast reference checks of the estimation building blocks

Each check compares a production routine against an independent computation
(quadrature, closed form or brute-force minimisation) and reports the gap.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, List

import numpy as np

from core.likelihoods import gaussian_likelihood
from core.models import PosteriorModel, ThetaDomain
from core.regularisers import zero_regulariser
from oracle.brute_prox import brute_prox
from oracle.closed_form import gaussian_marginal_mle, ula_gaussian_stationary_variance
from oracle.quadrature import (
    OracleModel,
    adaptive_grid,
    quadrature_argmax_theta,
    quadrature_grad_marginal,
    quadrature_log_z,
)
from prox.operators import (
    prox_l1_residual,
    prox_tv_iso,
    prox_weighted_l1_blocks,
    soft_threshold,
)
from sampler.myula import ChainState, KernelParams, myula_posterior_step

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self):
        return asdict(self)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def check_homogeneity_identity(thetas=(0.5, 1.0, 3.0), tol: float = 1e-3) -> List[CheckResult]:
    """d/dtheta log Z = -d / (alpha theta) against differences of quadrature log Z (d = 2)"""
    cases = {
        "l1": (lambda p: np.sum(np.abs(p), axis=1), 1.0),
        "squared_l2": (lambda p: np.sum(p * p, axis=1), 2.0),
    }
    results = []
    d = 2
    for label, (g, alpha) in cases.items():
        for theta in thetas:
            grid = adaptive_grid(lambda p: -theta * g(p), d).grid
            h = 1e-4 * theta
            fd = (quadrature_log_z(g, theta + h, d, grid) - quadrature_log_z(g, theta - h, d, grid)) / (2 * h)
            err = _relative(fd, -d / (alpha * theta))
            results.append(CheckResult(f"log_z_identity[{label}, theta={theta:g}]", err < tol, err, tol))
    return results


def check_fisher_identity(tol: float = 1e-3) -> CheckResult:
    y = np.array([0.7, -1.2])
    sigma2 = 0.5
    model = OracleModel(
        f=lambda p: np.sum((p - y) ** 2, axis=1) / (2 * sigma2),
        g=lambda p: np.sum(np.abs(p), axis=1),
        d=2,
        center=tuple(y),
    )
    gap = quadrature_grad_marginal(model, 1.3).relative_gap
    return CheckResult("fisher_identity", gap < tol, gap, tol)


def check_marginal_argmax(tol: float = 1e-3) -> CheckResult:
    """Quadrature argmax of p(y|theta) against the Gaussian closed form"""
    y = np.array([1.5, -2.0])
    sigma2 = 0.5
    model = OracleModel(
        f=lambda p: np.sum((p - y) ** 2, axis=1) / (2 * sigma2),
        g=lambda p: np.sum(p * p, axis=1),
        d=2,
        center=tuple(y),
    )
    found = quadrature_argmax_theta(model, (0.01, 10.0))
    exact = gaussian_marginal_mle(y, sigma2)
    err = _relative(found, exact)
    return CheckResult("marginal_argmax", err < tol, err, tol, f"quadrature={found:.6g} exact={exact:.6g}")


def check_ula_variance(gammas=(0.05, 0.1, 0.2), coords: int = 4000, steps: int = 2500,
                       seed: int = 0, tol: float = 0.01) -> List[CheckResult]:
    """Empirical stationary variance of the unadjusted kernel on N(0, 1), pooled over coordinates"""
    results = []
    for gamma in gammas:
        model = PosteriorModel(
            likelihood=gaussian_likelihood(np.zeros(coords), 1.0),
            regulariser=zero_regulariser((coords,)),
            theta_domain=ThetaDomain(lower=[1.0], upper=[1.0]),
            shape=(coords,),
            name="standard-normal",
        )
        rng = np.random.default_rng(seed)
        expected = ula_gaussian_stationary_variance(gamma, 1.0)
        state = ChainState.start(np.sqrt(expected) * rng.standard_normal(coords), rng)
        params = KernelParams(gamma=gamma, lam=1.0)
        for _ in range(int(20 / gamma)):
            myula_posterior_step(model, state, [1.0], params)
        second_moment = 0.0
        for _ in range(steps):
            myula_posterior_step(model, state, [1.0], params)
            second_moment += float(np.mean(state.x ** 2))
        empirical = second_moment / steps
        err = _relative(empirical, expected)
        results.append(CheckResult(f"ula_variance[gamma={gamma:g}]", err < tol, err, tol,
                                   f"empirical={empirical:.5f} expected={expected:.5f}"))
    return results


def _prox_case(name: str, fast: Callable[[np.ndarray], np.ndarray], g: Callable[[np.ndarray], float],
               lam: float, x: np.ndarray, tol: float) -> CheckResult:
    reference = brute_prox(g, lam, x)
    err = float(np.max(np.abs(fast(x) - reference)))
    return CheckResult(name, err < tol, err, tol)


def check_proxes(seed: int = 0, tol: float = 1e-4) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    x = rng.normal(size=3) * 2
    results.append(_prox_case("soft_threshold", lambda v: soft_threshold(v, 0.7),
                              lambda u: 0.7 * np.sum(np.abs(u)), 1.0, x, tol))

    y = rng.normal(size=3)
    x = rng.normal(size=3) * 2
    results.append(_prox_case("prox_l1_residual", lambda v: prox_l1_residual(v, y, 0.4),
                              lambda u: 0.4 * np.sum(np.abs(y - u)), 1.0, x, tol))

    blocks = [np.array([0, 1]), np.array([2, 3])]
    weights = np.array([0.3, 1.1])
    x = rng.normal(size=4) * 2
    results.append(_prox_case(
        "prox_weighted_l1_blocks",
        lambda v: prox_weighted_l1_blocks(v, weights, blocks, lam=0.8),
        lambda u: weights[0] * np.sum(np.abs(u[:2])) + weights[1] * np.sum(np.abs(u[2:])),
        0.8, x, tol,
    ))

    image = rng.normal(size=(2, 2))

    def tv_2x2(u):
        u = u.reshape(2, 2)
        return 0.5 * (np.hypot(u[1, 0] - u[0, 0], u[0, 1] - u[0, 0])
                      + np.abs(u[1, 1] - u[0, 1]) + np.abs(u[1, 1] - u[1, 0]))

    results.append(_prox_case(
        "prox_tv_iso[2x2]",
        lambda v: prox_tv_iso(v.reshape(2, 2), 0.5, inner_iters=5000).point.ravel(),
        tv_2x2, 1.0, image.ravel(), tol,
    ))

    worst = -np.inf
    for _ in range(100):
        u, v = rng.normal(size=8) * 2, rng.normal(size=8) * 2
        pu, pv = soft_threshold(u, 0.5), soft_threshold(v, 0.5)
        worst = max(worst, float(np.dot(pu - pv, pu - pv) - np.dot(pu - pv, u - v)))
    results.append(CheckResult("firm_nonexpansiveness[soft_threshold]", worst <= 1e-12, worst, 1e-12))
    return results


def run_oracle_checks(seed: int = 0) -> List[CheckResult]:
    results: List[CheckResult] = []
    results += check_homogeneity_identity()
    results.append(check_fisher_identity())
    results.append(check_marginal_argmax())
    results += check_ula_variance(seed=seed)
    results += check_proxes(seed=seed)
    for r in results:
        log = logger.info if r.passed else logger.error
        log(f"{r.name}: {'ok' if r.passed else 'FAILED'} (value={r.value:.3e}, tol={r.tolerance:.1e})")
    return results
