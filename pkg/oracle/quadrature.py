"""
Quadrature Oracle - Tensor-grid Simpson integration of exp(-energy) in d <= 3 dimensions

All integrals are accumulated as max-shifted exponentials so large theta does not underflow.
The grid radius doubles until the outer shell carries a negligible mass, then the grid is
refined until halving the spacing changes log Z by less than the tolerance.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar

from core.errors import NonDecayingIntegrandError, OracleConvergenceError, OracleError

logger = logging.getLogger(__name__)

MAX_DIM = 3
TAIL_TOL = 1e-8
SELF_CONSISTENCY_TOL = 1e-4

# Vectorised callables on an (N, d) array of points
Energy = Callable[[np.ndarray], np.ndarray]
Statistics = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuadratureGrid:
    """Symmetric tensor grid of n points per axis on [center - radius, center + radius]^d"""
    d: int
    radius: float
    n: int
    center: Tuple[float, ...] = ()

    def axes(self):
        center = self.center or (0.0,) * self.d
        return [np.linspace(c - self.radius, c + self.radius, self.n) for c in center]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def refined(self) -> "QuadratureGrid":
        return QuadratureGrid(self.d, self.radius, 2 * self.n - 1, self.center)

    def expanded(self) -> "QuadratureGrid":
        return QuadratureGrid(self.d, 2.0 * self.radius, self.n, self.center)


@dataclass(frozen=True)
class QuadratureResult:
    log_value: float
    grid: QuadratureGrid
    tail_fraction: float


def _check_dim(d: int):
    if not 1 <= d <= MAX_DIM:
        raise OracleError(f"Quadrature oracle supports 1 <= d <= {MAX_DIM}, got d={d}")


def _integrate(values: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Simpson rule over the trailing d axes of values shaped (..., n, ..., n)"""
    out = values
    for axis in reversed(grid.axes()):
        out = simpson(out, x=axis, axis=-1)
    return out


def _log_integrals(log_f: np.ndarray, grid: QuadratureGrid, moments: Optional[np.ndarray] = None):
    """
    log of the integral of exp(log_f) and, with ``moments`` of shape (N, k), the ratios
    int m_j exp(log_f) / int exp(log_f).
    """
    shift = np.max(log_f)
    if not np.isfinite(shift):
        raise OracleError("Integrand is not finite anywhere on the grid")
    shape = (grid.n,) * grid.d
    weights = np.exp(log_f - shift)
    total = float(_integrate(weights.reshape(shape), grid))
    if not total > 0:
        raise OracleError("Integrand mass vanished on the grid")
    log_total = shift + np.log(total)
    if moments is None:
        return log_total, None
    stacked = (moments.T * weights).reshape((moments.shape[1],) + shape)
    return log_total, _integrate(stacked, grid) / total


def _tail_fraction(log_f: np.ndarray, grid: QuadratureGrid) -> float:
    """Share of the mass outside the inner half of the box (sup-norm)"""
    center = np.array(grid.center or (0.0,) * grid.d)
    pts = grid.points()
    outer = np.max(np.abs(pts - center), axis=1) > 0.5 * grid.radius
    shift = np.max(log_f)
    shape = (grid.n,) * grid.d
    weights = np.exp(log_f - shift)
    total = float(_integrate(weights.reshape(shape), grid))
    tail = float(_integrate(np.where(outer, weights, 0.0).reshape(shape), grid))
    return abs(tail) / total if total > 0 else 1.0


def adaptive_grid(log_density: Energy,
                  d: int,
                  radius: float = 1.0,
                  n: int = 201,
                  center: Optional[np.ndarray] = None,
                  tol: float = SELF_CONSISTENCY_TOL,
                  tail_tol: float = TAIL_TOL,
                  max_doublings: int = 12,
                  max_n: int = 3201) -> QuadratureResult:
    """
    Choose a grid for the unnormalised log-density ``log_density`` (vectorised over points).

    Raises NonDecayingIntegrandError if the outer-shell mass is still above ``tail_tol``
    after ``max_doublings`` radius doublings.
    """
    _check_dim(d)
    if d == 3:
        # n^3 points per evaluation
        n, max_n = min(n, 81), min(max_n, 161)
    if (n - 1) % 4:
        n = 4 * ((n - 1) // 4 + 1) + 1
    c = tuple(float(v) for v in (np.zeros(d) if center is None else np.atleast_1d(center)))
    grid = QuadratureGrid(d, float(radius), n, c)

    tail = _tail_fraction(log_density(grid.points()), grid)
    doublings = 0
    while tail > tail_tol:
        if doublings >= max_doublings:
            raise NonDecayingIntegrandError(grid.radius, tail)
        grid = grid.expanded()
        tail = _tail_fraction(log_density(grid.points()), grid)
        doublings += 1

    log_value, _ = _log_integrals(log_density(grid.points()), grid)
    while True:
        finer = grid.refined()
        if finer.n > max_n:
            raise OracleConvergenceError(
                f"Quadrature did not self-stabilise below {tol:.1e} with {grid.n} points per axis"
            )
        finer_value, _ = _log_integrals(log_density(finer.points()), finer)
        change = abs(finer_value - log_value)
        grid, log_value = finer, finer_value
        if change < tol:
            break
    logger.debug(f"Quadrature grid radius={grid.radius:g} n={grid.n} tail={tail:.2e}")
    return QuadratureResult(log_value=log_value, grid=grid, tail_fraction=tail)


def _prior_log_density(g: Statistics, theta: np.ndarray) -> Energy:
    def log_density(points):
        stats = np.asarray(g(points), dtype=float).reshape(len(points), -1)
        return -stats @ theta
    return log_density


def quadrature_log_z(g: Statistics, theta, d: int, grid_spec: Optional[QuadratureGrid] = None) -> float:
    """
    log of the integral of exp(-theta^T g(x)) over R^d.

    ``g`` maps an (N, d) array of points to an (N, d_theta) (or (N,)) array of statistics.
    A fixed ``grid_spec`` skips the adaptive search (used for finite differences).
    """
    _check_dim(d)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    log_density = _prior_log_density(g, theta)
    if grid_spec is not None:
        return _log_integrals(log_density(grid_spec.points()), grid_spec)[0]
    return adaptive_grid(log_density, d).log_value


@dataclass(frozen=True)
class OracleModel:
    """
    Low-dimensional empirical Bayes toy: f_y and g vectorised over (N, d) points.
    ``log_lik_const`` is log of the likelihood's normalising factor (constant in theta).
    """
    f: Energy
    g: Statistics
    d: int
    center: Optional[Tuple[float, ...]] = None
    log_lik_const: float = 0.0


@dataclass(frozen=True)
class MarginalGrids:
    prior: QuadratureGrid
    posterior: QuadratureGrid


def _posterior_log_density(model: OracleModel, theta: np.ndarray) -> Energy:
    def log_density(points):
        stats = np.asarray(model.g(points), dtype=float).reshape(len(points), -1)
        return -np.asarray(model.f(points), dtype=float) - stats @ theta
    return log_density


def marginal_grids(model: OracleModel, theta) -> MarginalGrids:
    """Adaptive grids for the prior and posterior integrands at ``theta``"""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    prior = adaptive_grid(_prior_log_density(model.g, theta), model.d).grid
    posterior = adaptive_grid(_posterior_log_density(model, theta), model.d, center=model.center).grid
    return MarginalGrids(prior=prior, posterior=posterior)


def quadrature_log_marginal(model: OracleModel, theta, grids: Optional[MarginalGrids] = None) -> float:
    """log p(y | theta) = log int exp(-f_y - theta^T g) - log Z(theta) + log_lik_const"""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    grids = grids or marginal_grids(model, theta)
    log_joint, _ = _log_integrals(_posterior_log_density(model, theta)(grids.posterior.points()), grids.posterior)
    log_z, _ = _log_integrals(_prior_log_density(model.g, theta)(grids.prior.points()), grids.prior)
    return log_joint - log_z + model.log_lik_const


@dataclass(frozen=True)
class MarginalGradient:
    fisher: np.ndarray
    finite_difference: np.ndarray

    @property
    def relative_gap(self) -> float:
        scale = np.maximum(np.abs(self.finite_difference), 1e-12)
        return float(np.max(np.abs(self.fisher - self.finite_difference) / scale))


def quadrature_grad_marginal(model: OracleModel,
                             theta,
                             grids: Optional[MarginalGrids] = None,
                             rel_step: float = 1e-4) -> MarginalGradient:
    """
    grad_theta log p(y | theta) two ways: Fisher's identity E_prior[g] - E_posterior[g],
    and central differences of quadrature_log_marginal on the same grids.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    grids = grids or marginal_grids(model, theta)

    post_pts, prior_pts = grids.posterior.points(), grids.prior.points()
    post_stats = np.asarray(model.g(post_pts), dtype=float).reshape(len(post_pts), -1)
    prior_stats = np.asarray(model.g(prior_pts), dtype=float).reshape(len(prior_pts), -1)
    _, e_post = _log_integrals(-np.asarray(model.f(post_pts), dtype=float) - post_stats @ theta,
                               grids.posterior, post_stats)
    _, e_prior = _log_integrals(-prior_stats @ theta, grids.prior, prior_stats)
    fisher = e_prior - e_post

    fd = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * theta[i]
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        fd[i] = (quadrature_log_marginal(model, up, grids) - quadrature_log_marginal(model, down, grids)) / (2 * h)
    return MarginalGradient(fisher=fisher, finite_difference=fd)


def quadrature_argmax_theta(model: OracleModel, bounds: Tuple[float, float], xatol: float = 1e-8) -> float:
    """
    Maximiser of the quadrature marginal likelihood over scalar theta in ``bounds``.
    Grids are fixed once, sized for the widest prior in the range.
    """
    lo, hi = bounds
    if not 0 < lo < hi:
        raise OracleError(f"Invalid theta bounds {bounds}")
    wide = marginal_grids(model, lo)
    narrow = marginal_grids(model, hi)
    grids = MarginalGrids(
        prior=QuadratureGrid(model.d, wide.prior.radius, max(wide.prior.n, narrow.prior.n), wide.prior.center),
        posterior=QuadratureGrid(model.d, max(wide.posterior.radius, narrow.posterior.radius),
                                 max(wide.posterior.n, narrow.posterior.n), wide.posterior.center),
    )

    def objective(log_theta):
        return -quadrature_log_marginal(model, np.exp(log_theta), grids)

    res = minimize_scalar(objective, bounds=(np.log(lo), np.log(hi)), method="bounded",
                          options={"xatol": xatol})
    if not res.success:
        raise OracleConvergenceError(f"Marginal likelihood maximisation failed: {res.message}")
    return float(np.exp(res.x))
