"""
SAPG Iterations - One theta update per call for the four estimation loops

alg1: homogeneous g, closed-form log Z drift
alg2: separably homogeneous g, per-block drifts
alg3: general g, second chain targeting the prior
alg4: alg1/alg2 theta update plus a joint update of the noise variance
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.errors import DivergenceError, HomogeneityMismatchError
from core.likelihoods import GaussianObservation
from core.models import (
    DomainTag,
    General,
    Homogeneous,
    PosteriorModel,
    RegulariserSpec,
    SeparablyHomogeneous,
    ThetaDomain,
)
from sampler.myula import (
    POSTERIOR,
    PRIOR,
    ChainState,
    KernelParams,
    myula_posterior_step,
    myula_prior_step,
)
from sapg.drift import grad_logz_drift_homogeneous, grad_logz_drift_separable
from sapg.schedules import StepSchedule, project_eta, project_theta
from sapg.trace import ThetaTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class UnknownNoiseModel:
    """Gaussian observation with unknown sigma^2; yields the posterior model for any sigma^2"""
    observation: GaussianObservation
    regulariser: RegulariserSpec
    theta_domain: ThetaDomain
    shape: Tuple[int, ...]
    domain_tag: DomainTag = DomainTag.PIXEL
    name: str = "unknown-noise"

    def model(self, sigma2: float, check_dims: bool = False) -> PosteriorModel:
        return PosteriorModel(
            likelihood=self.observation.likelihood(sigma2),
            regulariser=self.regulariser,
            theta_domain=self.theta_domain,
            shape=self.shape,
            domain_tag=self.domain_tag,
            name=self.name,
            check_dims=check_dims,
        )


@dataclass
class SapgState:
    """
    Mutable state of one SAPG run. ``iteration`` is n; theta is theta_n.
    In log scale eta = log(theta) is the iterate and theta is derived from it.
    """
    theta: np.ndarray
    chains: Dict[str, ChainState]
    trace: ThetaTrace
    log_scale: bool = False
    eta: Optional[np.ndarray] = None
    iteration: int = 0
    sigma2: Optional[float] = None
    sigma_log_scale: bool = False
    stage_history: List[Dict] = field(default_factory=list)
    stage_traces: List[ThetaTrace] = field(default_factory=list)

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if self.log_scale and self.eta is None:
            self.eta = np.log(self.theta)

    @property
    def posterior(self) -> ChainState:
        return self.chains[POSTERIOR]

    @property
    def prior(self) -> ChainState:
        if PRIOR not in self.chains:
            raise KeyError("This run has no prior chain")
        return self.chains[PRIOR]


def require_homogeneity(regulariser: RegulariserSpec, algorithm: str):
    """Raise HomogeneityMismatchError when ``algorithm`` cannot handle the regulariser"""
    hom = regulariser.homogeneity
    allowed = {
        "alg1": (Homogeneous,),
        "alg2": (SeparablyHomogeneous,),
        "alg3": (Homogeneous, SeparablyHomogeneous, General),
        "alg4": (Homogeneous, SeparablyHomogeneous),
    }
    if algorithm not in allowed:
        raise ValueError(f"Unknown algorithm '{algorithm}'")
    if not isinstance(hom, allowed[algorithm]):
        raise HomogeneityMismatchError(
            f"{algorithm} cannot be used with a {type(hom).__name__} regulariser ('{regulariser.name}')"
        )


def _log_z_drift(regulariser: RegulariserSpec, theta: np.ndarray) -> np.ndarray:
    hom = regulariser.homogeneity
    if isinstance(hom, Homogeneous):
        return grad_logz_drift_homogeneous(regulariser.effective_dim, hom.alpha, theta)
    if isinstance(hom, SeparablyHomogeneous):
        return grad_logz_drift_separable(hom.blocks, theta)
    raise HomogeneityMismatchError(f"No closed-form log Z drift for '{regulariser.name}'")


def _sample_stats(model: PosteriorModel,
                  chain: ChainState,
                  theta: np.ndarray,
                  params: KernelParams,
                  m_n: int,
                  target: str,
                  thinning: int = 1,
                  extra=None) -> Tuple[np.ndarray, List[float]]:
    """m_n samples (each after ``thinning`` transitions); mean of g and optional extra statistic"""
    step = myula_posterior_step if target == POSTERIOR else myula_prior_step
    stats = np.zeros(model.regulariser.n_params)
    extras = []
    for _ in range(m_n):
        for _ in range(thinning):
            step(model, chain, theta, params)
        stats += model.regulariser.statistics(chain.x)
        if extra is not None:
            extras.append(extra(chain.x))
    return stats / m_n, extras


def _flag_bounds(trace: ThetaTrace, name: str, value: np.ndarray, unprojected: np.ndarray,
                 lower: np.ndarray, upper: np.ndarray):
    for i in range(value.size):
        label = name if value.size == 1 else f"{name}_{i + 1}"
        if unprojected[i] < lower[i]:
            trace.flag_saturation(label, "lower", value[i])
        elif unprojected[i] > upper[i]:
            trace.flag_saturation(label, "upper", value[i])


def ascent_step(state: SapgState,
                domain: ThetaDomain,
                grad: np.ndarray,
                schedule: StepSchedule) -> Tuple[float, np.ndarray]:
    """
    theta_{n+1} = Pi_Theta[theta_n + delta_{n+1} * D * grad], or in log scale
    eta_{n+1} = Pi[eta_n + delta_{n+1} * D * theta_n * grad]. Returns (delta, new theta).
    """
    delta = schedule(state.iteration + 1)
    step = delta * schedule.scales(grad.size) * grad
    if state.log_scale:
        moved = state.eta + step * np.exp(state.eta)
        eta = project_eta(moved, domain)
        theta = np.clip(np.exp(eta), domain.lower, domain.upper)
        _flag_bounds(state.trace, "theta", theta, moved, np.log(domain.lower), np.log(domain.upper))
        state.eta = eta
    else:
        moved = state.theta + step
        theta = project_theta(moved, domain)
        _flag_bounds(state.trace, "theta", theta, moved, domain.lower, domain.upper)
    return delta, theta


def _finish(state: SapgState, delta, theta, grad, g_mean, g_prior_mean=None):
    state.theta = theta
    state.iteration += 1
    state.trace.record(theta, delta=delta, grad=grad, g_mean=g_mean,
                       g_prior_mean=g_prior_mean, sigma2=state.sigma2)
    logger.debug(
        f"n={state.iteration} delta={delta:.3e} theta={theta} |grad|={np.linalg.norm(grad):.3e}"
    )
    return state


def _homogeneous_step(state: SapgState,
                      model: PosteriorModel,
                      schedule: StepSchedule,
                      kernel_params: KernelParams,
                      m_n: int,
                      algorithm: str) -> SapgState:
    """grad_i = |A_i| / (alpha_i theta_i) - mean g_i(X); a homogeneous g is the single-block case"""
    require_homogeneity(model.regulariser, algorithm)
    g_mean, _ = _sample_stats(model, state.posterior, state.theta, kernel_params, m_n, POSTERIOR)
    grad = _log_z_drift(model.regulariser, state.theta) - g_mean
    delta, theta = ascent_step(state, model.theta_domain, grad, schedule)
    return _finish(state, delta, theta, grad, g_mean)


def sapg_step_alg1(state: SapgState,
                   model: PosteriorModel,
                   schedule: StepSchedule,
                   kernel_params: KernelParams,
                   m_n: int = 1) -> SapgState:
    """Homogeneous g: grad = d_eff / (alpha theta) - mean g(X)"""
    return _homogeneous_step(state, model, schedule, kernel_params, m_n, "alg1")


def sapg_step_alg2(state: SapgState,
                   model: PosteriorModel,
                   schedule: StepSchedule,
                   kernel_params: KernelParams,
                   m_n: int = 1) -> SapgState:
    """Separably homogeneous g, one parameter per block"""
    return _homogeneous_step(state, model, schedule, kernel_params, m_n, "alg2")


def sapg_step_alg3(state: SapgState,
                   model: PosteriorModel,
                   schedule: StepSchedule,
                   kernel_params_posterior: KernelParams,
                   kernel_params_prior: KernelParams,
                   m_n: int = 1,
                   prior_thinning: int = 1,
                   posterior_thinning: int = 1) -> SapgState:
    """General g: grad = mean g(prior chain) - mean g(posterior chain)"""
    require_homogeneity(model.regulariser, "alg3")
    g_post, _ = _sample_stats(model, state.posterior, state.theta, kernel_params_posterior,
                              m_n, POSTERIOR, thinning=posterior_thinning)
    try:
        g_prior, _ = _sample_stats(model, state.prior, state.theta, kernel_params_prior,
                                   m_n, PRIOR, thinning=prior_thinning)
    except DivergenceError:
        logger.error("Prior chain diverged; check that the prior is proper and gamma' < lambda'")
        raise
    grad = g_prior - g_post
    delta, theta = ascent_step(state, model.theta_domain, grad, schedule)
    return _finish(state, delta, theta, grad, g_post, g_prior)


def sigma_ascent(state: SapgState,
                 grad: float,
                 schedule: StepSchedule,
                 sigma_bounds: Tuple[float, float]) -> float:
    """sigma2 update projected on [sigma2_min, sigma2_max]; log scale multiplies the step by sigma2"""
    lo, hi = sigma_bounds
    delta = schedule(state.iteration + 1)
    if state.sigma_log_scale:
        moved = np.log(state.sigma2) + delta * state.sigma2 * grad
        value = float(np.clip(np.exp(np.clip(moved, np.log(lo), np.log(hi))), lo, hi))
        lo_cmp, hi_cmp = np.log(lo), np.log(hi)
    else:
        moved = state.sigma2 + delta * grad
        value = float(np.clip(moved, lo, hi))
        lo_cmp, hi_cmp = lo, hi
    _flag_bounds(state.trace, "sigma2", np.array([value]), np.array([moved]),
                 np.array([lo_cmp]), np.array([hi_cmp]))
    return value


def sapg_step_alg4(state: SapgState,
                   model_with_unknown_sigma: UnknownNoiseModel,
                   schedule_theta: StepSchedule,
                   schedule_sigma: StepSchedule,
                   kernel_params: KernelParams,
                   m_n: int,
                   sigma_bounds: Tuple[float, float]) -> SapgState:
    """
    Joint update of theta (as alg1/alg2) and sigma2 with
    grad_sigma2 = ||y - A X||^2 / (2 sigma2^2) - d_y / (2 sigma2).
    """
    problem = model_with_unknown_sigma
    require_homogeneity(problem.regulariser, "alg4")
    lo, hi = sigma_bounds
    if not 0 < lo < hi:
        raise ValueError(f"sigma2 bounds must satisfy 0 < min < max, got {sigma_bounds}")
    if state.sigma2 is None:
        raise ValueError("alg4 needs an initial sigma2 in the state")

    model = problem.model(state.sigma2)
    g_mean, residuals = _sample_stats(model, state.posterior, state.theta, kernel_params, m_n,
                                      POSTERIOR, extra=problem.observation.residual_sq)
    grad = _log_z_drift(problem.regulariser, state.theta) - g_mean

    s2 = state.sigma2
    d_y = problem.observation.obs_dim
    sigma_grad = float(np.mean([r / (2.0 * s2 * s2) - d_y / (2.0 * s2) for r in residuals]))
    new_sigma2 = sigma_ascent(state, sigma_grad, schedule_sigma, sigma_bounds)

    delta, theta = ascent_step(state, problem.theta_domain, grad, schedule_theta)
    state.sigma2 = new_sigma2
    return _finish(state, delta, theta, grad, g_mean)
