"""
SAPG Runner - Configuration and end-to-end orchestration of the estimation loops
Warm-up, main loop until the stop rule, three-stage refinement for unknown noise variance
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from core.errors import ConfigError
from core.models import PosteriorModel, ThetaDomain
from sampler.myula import (
    POSTERIOR,
    PRIOR,
    ChainState,
    KernelParams,
    check_stability,
    posterior_kernel_params,
    prior_kernel_params,
    warm_up,
)
from sapg.algorithms import (
    SapgState,
    UnknownNoiseModel,
    require_homogeneity,
    sapg_step_alg1,
    sapg_step_alg2,
    sapg_step_alg3,
    sapg_step_alg4,
)
from sapg.schedules import (
    StepSchedule,
    StopRule,
    WeightScheme,
    project_theta,
    relative_change,
    stop_check,
)
from sapg.trace import ThetaTrace

logger = logging.getLogger(__name__)

Algorithm = Literal["alg1", "alg2", "alg3", "alg4"]
FloatList = List[float]


class SapgConfig(BaseModel):
    """Tuning knobs of one SAPG run; defaults follow the general guidelines"""

    algorithm: Algorithm = "alg1"

    # theta and its domain (scalars broadcast to every component)
    theta0: FloatList = Field(default_factory=lambda: [0.01])
    theta_lower: FloatList = Field(default_factory=lambda: [1e-4])
    theta_upper: FloatList = Field(default_factory=lambda: [1e4])
    log_scale: bool = True

    # delta_n = c0 * n^-p; c0 defaults to 1 / (theta0 * d), c0_over_dim gives c0 = value / d
    c0: Optional[float] = Field(default=None, gt=0)
    c0_over_dim: Optional[float] = Field(default=None, gt=0)
    exponent: float = Field(default=0.8, ge=0.6, le=0.9)
    step_scale: Optional[FloatList] = None

    # averaging weights and stop rule
    n0: int = Field(default=20, ge=0)
    n1: Optional[int] = None
    tail: Literal["uniform", "decreasing"] = "uniform"
    tolerance: float = Field(default=1e-3, gt=0)
    max_iters: int = Field(default=1000, ge=1)

    # Markov kernels
    m_n: int = Field(default=1, ge=1)
    warm_up: int = Field(default=0, ge=0)
    lam: Optional[float] = Field(default=None, gt=0)
    lam_factor: float = Field(default=1.0, gt=0)
    lam_max: float = Field(default=2.0, gt=0)
    gamma: Optional[float] = Field(default=None, gt=0)
    gamma_factor: float = Field(default=0.98, gt=0)
    lipschitz_factor: float = Field(default=1.0, gt=0)
    prior_lam: Optional[float] = Field(default=None, gt=0)
    prior_gamma_factor: float = Field(default=0.98, gt=0)
    prior_thinning: int = Field(default=1, ge=1)
    posterior_thinning: int = Field(default=1, ge=1)
    enforce_stability: bool = True

    # joint noise-variance estimation
    sigma2_0: Optional[float] = Field(default=None, gt=0)
    sigma2_min: Optional[float] = Field(default=None, gt=0)
    sigma2_max: Optional[float] = Field(default=None, gt=0)
    sigma_c0: Optional[float] = Field(default=None, gt=0)
    sigma_c0_over_dim: Optional[float] = Field(default=None, gt=0)
    sigma_log_scale: bool = False
    stages: int = Field(default=1, ge=1)
    restart_stage_parameters: bool = False

    @field_validator("theta0", "theta_lower", "theta_upper", "step_scale", mode="before")
    @classmethod
    def _as_list(cls, value):
        if value is None or isinstance(value, (list, tuple)):
            return value
        return [value]

    @model_validator(mode="after")
    def _check_consistency(self):
        sizes = {len(self.theta0), len(self.theta_lower), len(self.theta_upper)}
        if len(sizes - {1}) > 1:
            raise ValueError("theta0, theta_lower and theta_upper have incompatible lengths")
        if any(v <= 0 for v in self.theta_lower):
            raise ValueError("theta_lower must be > 0")
        lower, upper = np.broadcast_arrays(self.theta_lower, self.theta_upper)
        if np.any(upper < lower):
            raise ValueError("theta_upper must be >= theta_lower")
        if self.n1 is not None and self.n1 <= self.n0:
            raise ValueError("n1 must be greater than n0")
        if self.c0 is not None and self.c0_over_dim is not None:
            raise ValueError("set at most one of c0 and c0_over_dim")
        if self.sigma2_min is not None and self.sigma2_max is not None:
            if not self.sigma2_min < self.sigma2_max:
                raise ValueError("sigma2_min must be < sigma2_max")
        return self

    def theta_domain(self, n_params: int) -> ThetaDomain:
        lower = np.broadcast_to(np.asarray(self.theta_lower, dtype=float), (n_params,))
        upper = np.broadcast_to(np.asarray(self.theta_upper, dtype=float), (n_params,))
        return ThetaDomain(lower=lower.copy(), upper=upper.copy())

    def initial_theta(self, n_params: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.theta0, dtype=float), (n_params,)).copy()

    def schedule(self, dim: int) -> StepSchedule:
        if self.c0 is not None:
            c0 = self.c0
        elif self.c0_over_dim is not None:
            c0 = self.c0_over_dim / dim
        else:
            c0 = 1.0 / (float(np.min(self.theta0)) * dim)
        return StepSchedule(c0=c0, exponent=self.exponent, scale=self.step_scale)

    def sigma_schedule(self, dim: int) -> StepSchedule:
        if self.sigma_c0 is not None:
            c0 = self.sigma_c0
        elif self.sigma_c0_over_dim is not None:
            c0 = self.sigma_c0_over_dim / dim
        else:
            c0 = self.schedule(dim).c0
        return StepSchedule(c0=c0, exponent=self.exponent)

    def weights(self) -> WeightScheme:
        return WeightScheme(n0=self.n0, n1=self.n1, tail=self.tail)

    def stop_rule(self) -> StopRule:
        return StopRule(tol=self.tolerance, max_iters=self.max_iters)

    def posterior_params(self, lipschitz: float) -> KernelParams:
        return posterior_kernel_params(
            lipschitz * self.lipschitz_factor,
            lam=self.lam,
            lam_factor=self.lam_factor,
            lam_max=self.lam_max,
            gamma=self.gamma,
            gamma_factor=self.gamma_factor,
        )

    def prior_params(self, posterior: KernelParams) -> KernelParams:
        return prior_kernel_params(self.prior_lam or posterior.lam, self.prior_gamma_factor)


@dataclass
class SapgResult:
    theta_bar: np.ndarray
    iterations: int
    stopped_by: str
    state: SapgState
    traces: List[ThetaTrace]
    sigma2_bar: Optional[float] = None
    warnings: List[Dict] = field(default_factory=list)

    @property
    def trace(self) -> ThetaTrace:
        return self.traces[-1]

    def summary(self) -> Dict:
        out = {
            "theta_bar": [float(t) for t in self.theta_bar],
            "iterations": int(self.iterations),
            "stopped_by": self.stopped_by,
            "warnings": self.warnings,
        }
        if self.sigma2_bar is not None:
            out["sigma2_bar"] = float(self.sigma2_bar)
        if self.state.stage_history:
            out["stages"] = self.state.stage_history
        return out


class SapgRunner:
    """
    Drives one SAPG run for a posterior model (alg1-alg3) or an unknown-noise model (alg4).

    ``x0`` is the chain starting point (the observation, or its coefficients in synthesis
    models). Chains draw their streams from ``seed`` via SeedSequence spawning.
    """

    def __init__(self,
                 config: SapgConfig,
                 model: Union[PosteriorModel, UnknownNoiseModel],
                 x0: Optional[np.ndarray] = None,
                 seed=0):
        self.config = config
        self.model = model
        self.n_params = model.regulariser.n_params
        self.domain = model.theta_domain
        self.dim = int(np.prod(model.shape))
        self.x0 = np.zeros(model.shape) if x0 is None else np.asarray(x0, dtype=float)
        self.seed_sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.state: Optional[SapgState] = None
        require_homogeneity(model.regulariser, config.algorithm)
        if config.algorithm == "alg4":
            if not isinstance(model, UnknownNoiseModel):
                raise TypeError("alg4 needs an UnknownNoiseModel")
            if config.sigma2_min is None or config.sigma2_max is None:
                raise ConfigError([("sapg.sigma2_min", "alg4 needs sigma2_min and sigma2_max")])

    # setup

    def _new_trace(self, stage: int = 1) -> ThetaTrace:
        return ThetaTrace(
            n_params=self.n_params,
            weights=self.config.weights(),
            track_sigma=self.config.algorithm == "alg4",
            stage=stage,
        )

    def initial_state(self) -> SapgState:
        post_seed, prior_seed = self.seed_sequence.spawn(2)
        chains = {POSTERIOR: ChainState.start(self.x0, post_seed, self._model_for_chain())}
        if self.config.algorithm == "alg3":
            chains[PRIOR] = ChainState.start(self.x0, prior_seed, self.model)

        theta0 = project_theta(self.config.initial_theta(self.n_params), self.domain, self.config.log_scale)
        sigma2 = self._initial_sigma2()
        state = SapgState(
            theta=theta0,
            chains=chains,
            trace=self._new_trace(),
            log_scale=self.config.log_scale,
            sigma2=sigma2,
            sigma_log_scale=self.config.sigma_log_scale,
        )
        state.trace.record(theta0, sigma2=sigma2)
        self.state = state
        return state

    def _initial_sigma2(self) -> Optional[float]:
        if self.config.algorithm != "alg4":
            return None
        lo, hi = self.config.sigma2_min, self.config.sigma2_max
        sigma2 = self.config.sigma2_0 if self.config.sigma2_0 is not None else 0.5 * (lo + hi)
        return float(np.clip(sigma2, lo, hi))

    def _model_for_chain(self) -> PosteriorModel:
        if isinstance(self.model, UnknownNoiseModel):
            return self.model.model(self.config.sigma2_min or 1.0)
        return self.model

    def kernel_params(self, lipschitz: float, true_lipschitz: Optional[float] = None) -> Tuple[KernelParams, Optional[KernelParams]]:
        """Posterior (and, for alg3, prior) kernel parameters with the stability check applied"""
        params = self.config.posterior_params(lipschitz)
        check_stability(params, true_lipschitz if true_lipschitz is not None else lipschitz,
                        enforce=self.config.enforce_stability, chain=POSTERIOR)
        prior = None
        if self.config.algorithm == "alg3":
            prior = self.config.prior_params(params)
            check_stability(prior, enforce=self.config.enforce_stability, chain=PRIOR,
                            field_path="sapg.prior_lam")
        return params, prior

    # loops

    def _warm_up(self, state: SapgState, model: PosteriorModel,
                 params: KernelParams, prior: Optional[KernelParams]):
        warm_up(model, state.posterior, state.theta, params, self.config.warm_up)
        if prior is not None:
            warm_up(model, state.prior, state.theta, prior, self.config.warm_up, target=PRIOR)

    def _stopped(self, state: SapgState) -> Optional[str]:
        trace = state.trace
        rule = self.config.stop_rule()
        if trace.iterations >= rule.max_iters:
            return "max_iters"
        if not stop_check(trace, rule):
            return None
        if trace.track_sigma:
            bars = np.array(trace.sigma2_bars)
            bars = bars[np.isfinite(bars)]
            if len(bars) < 2 or relative_change(bars[-2], bars[-1]) >= rule.tol:
                return None
        return "tolerance"

    def run_loop(self, state: SapgState, model: PosteriorModel,
                 params: KernelParams, prior: Optional[KernelParams]) -> str:
        """Iterate the configured algorithm until the stop rule fires; returns the stop reason"""
        cfg = self.config
        schedule = cfg.schedule(self.dim)
        sigma_schedule = cfg.sigma_schedule(self.dim) if cfg.algorithm == "alg4" else None
        sigma_bounds = (cfg.sigma2_min, cfg.sigma2_max)

        while True:
            if cfg.algorithm == "alg1":
                sapg_step_alg1(state, model, schedule, params, cfg.m_n)
            elif cfg.algorithm == "alg2":
                sapg_step_alg2(state, model, schedule, params, cfg.m_n)
            elif cfg.algorithm == "alg3":
                sapg_step_alg3(state, model, schedule, params, prior, cfg.m_n,
                               cfg.prior_thinning, cfg.posterior_thinning)
            else:
                sapg_step_alg4(state, self.model, schedule, sigma_schedule, params, cfg.m_n, sigma_bounds)
            reason = self._stopped(state)
            if reason:
                return reason

    def run(self) -> SapgResult:
        cfg = self.config
        logger.info(
            f"Starting {cfg.algorithm} on '{self.model.name}' (d={self.dim}, "
            f"d_theta={self.n_params}, log_scale={cfg.log_scale})"
        )
        if cfg.algorithm == "alg4":
            state = three_stage_refinement(self, stages=cfg.stages)
            traces = state.stage_traces
            stopped_by = state.stage_history[-1]["stopped_by"]
        else:
            state = self.initial_state()
            L = self.model.likelihood.lipschitz
            params, prior = self.kernel_params(L)
            logger.info(f"Kernel: gamma={params.gamma:.4e} lambda={params.lam:.4e}")
            self._warm_up(state, self.model, params, prior)
            stopped_by = self.run_loop(state, self.model, params, prior)
            traces = [state.trace]

        trace = state.trace
        result = SapgResult(
            theta_bar=trace.theta_bar.copy(),
            iterations=sum(t.iterations for t in traces),
            stopped_by=stopped_by,
            state=state,
            traces=traces,
            sigma2_bar=trace.sigma2_bar if trace.track_sigma else None,
            warnings=[s.to_dict() for t in traces for s in t.saturations],
        )
        logger.info(
            f"Finished after {result.iterations} iterations ({stopped_by}): theta_bar={result.theta_bar}"
            + (f" sigma2_bar={result.sigma2_bar:.4e}" if result.sigma2_bar is not None else "")
        )
        return result


def three_stage_refinement(runner: SapgRunner, stages: int = 3) -> SapgState:
    """
    Joint theta / sigma2 estimation in ``stages`` passes. Stage 1 sizes the kernel from the
    worst case sigma2_min; each later stage re-derives L_y, gamma and lambda from the previous
    stage's sigma2 average. Chains carry over between stages; theta and sigma2 restart from
    the previous averages unless ``restart_stage_parameters`` is set.
    """
    if stages < 1:
        raise ValueError(f"stages must be >= 1, got {stages}")
    cfg = runner.config
    problem = runner.model
    if not isinstance(problem, UnknownNoiseModel):
        raise TypeError("three-stage refinement needs an UnknownNoiseModel")

    state = runner.initial_state()
    traces: List[ThetaTrace] = []
    sigma2_for_kernel = cfg.sigma2_min

    for stage in range(1, stages + 1):
        if stage > 1:
            previous = traces[-1]
            averaged = np.isfinite(previous.sigma2_bar) and np.all(np.isfinite(previous.theta_bar))
            sigma2_for_kernel = previous.sigma2_bar if averaged else state.sigma2
            if cfg.restart_stage_parameters:
                theta = project_theta(cfg.initial_theta(runner.n_params), runner.domain, cfg.log_scale)
                sigma2 = runner._initial_sigma2()
            elif averaged:
                theta, sigma2 = previous.theta_bar.copy(), previous.sigma2_bar
            else:
                theta, sigma2 = state.theta.copy(), state.sigma2
            state.theta = theta
            state.eta = np.log(theta) if cfg.log_scale else None
            state.sigma2 = sigma2
            state.iteration = 0
            state.trace = runner._new_trace(stage)
            state.trace.record(theta, sigma2=sigma2)

        L_hat = problem.observation.lipschitz(sigma2_for_kernel)
        params, _ = runner.kernel_params(L_hat)
        logger.info(
            f"Stage {stage}/{stages}: L_hat={L_hat:.4e} gamma={params.gamma:.4e} lambda={params.lam:.4e}"
        )
        runner._warm_up(state, problem.model(state.sigma2), params, None)
        stopped_by = runner.run_loop(state, None, params, None)
        traces.append(state.trace)
        state.stage_history.append({
            "stage": stage,
            "lipschitz": float(L_hat),
            "gamma": float(params.gamma),
            "lambda": float(params.lam),
            "iterations": int(state.trace.iterations),
            "stopped_by": stopped_by,
            "theta_bar": [float(t) for t in state.trace.theta_bar],
            "sigma2_bar": float(state.trace.sigma2_bar),
        })

    state.stage_traces = traces
    return state


def run_sapg(config: SapgConfig,
             model: Union[PosteriorModel, UnknownNoiseModel],
             data: Optional[np.ndarray] = None,
             seed=0) -> Tuple[np.ndarray, ThetaTrace]:
    """Run the configured loop; ``data`` is the chain starting point. Returns (theta_bar, trace)."""
    result = SapgRunner(config, model, x0=data, seed=seed).run()
    return result.theta_bar, result.trace
