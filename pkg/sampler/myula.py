"""
MYULA Kernels - Moreau-Yosida unadjusted Langevin transitions for the posterior and the prior

X' = X - gamma*grad f_y(X) - gamma*(X - prox^lam_{theta^T g}(X))/lam + sqrt(2 gamma) Z
The prior kernel drops the likelihood term.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from core.errors import ConfigError, DivergenceError
from core.models import PosteriorModel, moreau_grad
from prox.operators import TvDualCache

logger = logging.getLogger(__name__)

POSTERIOR = "posterior"
PRIOR = "prior"

DEFAULT_GAMMA_FACTOR = 0.98
DEFAULT_LAM_MAX = 2.0


@dataclass(frozen=True)
class KernelParams:
    """Discretisation step gamma and Moreau smoothing lam"""
    gamma: float
    lam: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")

    def posterior_limit(self, lipschitz: float) -> float:
        """Largest admissible gamma for the posterior kernel: (L_y + 1/lam)^-1"""
        return 1.0 / (lipschitz + 1.0 / self.lam)

    def is_posterior_stable(self, lipschitz: float) -> bool:
        return self.gamma < self.posterior_limit(lipschitz)

    def is_prior_stable(self) -> bool:
        return self.gamma < self.lam


def posterior_kernel_params(lipschitz: float,
                            lam: Optional[float] = None,
                            lam_factor: float = 1.0,
                            lam_max: float = DEFAULT_LAM_MAX,
                            gamma: Optional[float] = None,
                            gamma_factor: float = DEFAULT_GAMMA_FACTOR) -> KernelParams:
    """
    lam = min(lam_factor / L_y, lam_max) and gamma = gamma_factor * (L_y + 1/lam)^-1 unless given.

    lam_factor = 1 is the general guideline; the deblurring presets use 5.
    """
    if not lipschitz > 0:
        raise ValueError(f"Lipschitz constant must be > 0, got {lipschitz}")
    lam = lam if lam is not None else min(lam_factor / lipschitz, lam_max)
    gamma = gamma if gamma is not None else gamma_factor / (lipschitz + 1.0 / lam)
    return KernelParams(gamma=gamma, lam=lam)


def prior_kernel_params(lam: float, gamma_factor: float = DEFAULT_GAMMA_FACTOR) -> KernelParams:
    """gamma' = gamma_factor * lam', inside the prior stability range 0 < gamma' < lam'"""
    return KernelParams(gamma=gamma_factor * lam, lam=lam)


def check_stability(params: KernelParams,
                    lipschitz: Optional[float] = None,
                    enforce: bool = True,
                    chain: str = POSTERIOR,
                    field_path: str = "sapg.gamma") -> bool:
    """
    Check gamma against the kernel's admissible range.

    Out of range with ``enforce`` raises ConfigError; otherwise it is logged and False returned.
    """
    if chain == POSTERIOR:
        stable = params.is_posterior_stable(lipschitz)
        limit = params.posterior_limit(lipschitz)
    else:
        stable = params.is_prior_stable()
        limit = params.lam
    if stable:
        return True
    message = f"{chain} kernel gamma={params.gamma:.4e} is not below the stability limit {limit:.4e}"
    if enforce:
        raise ConfigError([(field_path, message)])
    logger.warning(f"{message}; continuing because stability enforcement is off")
    return False


@dataclass
class ChainState:
    """
    Position and generator of one Markov chain.

    Owned by a single execution context; steps update it in place and return it.
    """
    x: np.ndarray
    rng: np.random.Generator
    step_count: int = 0
    warm: bool = False
    prox_cache: Optional[TvDualCache] = field(default=None, repr=False)

    @classmethod
    def start(cls, x0: np.ndarray, seed, model: Optional[PosteriorModel] = None) -> "ChainState":
        """New chain at ``x0``; ``seed`` is an int, a SeedSequence or a Generator"""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        cache = TvDualCache() if model is not None and model.regulariser.uses_cache else None
        return cls(x=np.array(x0, dtype=np.float64, copy=True), rng=rng, prox_cache=cache)


def _transition(model: PosteriorModel,
                state: ChainState,
                theta: np.ndarray,
                params: KernelParams,
                chain: str,
                noise: Optional[np.ndarray]) -> ChainState:
    theta = model.check_theta(theta)
    x = state.x
    drift = moreau_grad(model, x, theta, params.lam, cache=state.prox_cache)
    if chain == POSTERIOR:
        drift = drift + model.likelihood.drift(x)
    if model.regulariser.smooth_grad is not None:
        drift = drift + model.regulariser.smooth_grad(x, theta)

    z = noise if noise is not None else state.rng.standard_normal(x.shape)
    x_new = x - params.gamma * drift + np.sqrt(2.0 * params.gamma) * z
    state.step_count += 1
    if not np.all(np.isfinite(x_new)):
        logger.error(f"{chain} chain produced non-finite values at step {state.step_count}")
        raise DivergenceError(params.gamma, params.lam, theta, state.step_count, chain)
    state.x = x_new
    return state


def myula_posterior_step(model: PosteriorModel,
                         state: ChainState,
                         theta,
                         params: KernelParams,
                         noise: Optional[np.ndarray] = None) -> ChainState:
    """One posterior transition; ``noise`` overrides the Gaussian draw"""
    return _transition(model, state, theta, params, POSTERIOR, noise)


def myula_prior_step(model: PosteriorModel,
                     state: ChainState,
                     theta,
                     params: KernelParams,
                     noise: Optional[np.ndarray] = None) -> ChainState:
    """One prior transition; the prior must be proper"""
    return _transition(model, state, theta, params, PRIOR, noise)


def _step_fn(target: str):
    if target == POSTERIOR:
        return myula_posterior_step
    if target == PRIOR:
        return myula_prior_step
    raise ValueError(f"Unknown chain target '{target}'")


def warm_up(model: PosteriorModel,
            state: ChainState,
            theta,
            params: KernelParams,
            t0: int,
            target: str = POSTERIOR) -> ChainState:
    """t0 transitions at fixed theta; marks the chain warm"""
    if t0 < 0:
        raise ValueError(f"t0 must be >= 0, got {t0}")
    step = _step_fn(target)
    for _ in range(t0):
        step(model, state, theta, params)
    state.warm = True
    if t0:
        logger.debug(f"Warmed up {target} chain with {t0} steps")
    return state


def run_chain(model: PosteriorModel,
              state: ChainState,
              theta,
              params: KernelParams,
              steps: int,
              thinning: int = 1,
              target: str = POSTERIOR,
              record: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> Tuple[ChainState, List]:
    """
    Take ``steps`` transitions, recording every ``thinning``-th state.

    ``record`` maps a state to what is stored (default: a copy of x).
    """
    if thinning < 1:
        raise ValueError(f"thinning must be >= 1, got {thinning}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    step = _step_fn(target)
    record = record or (lambda x: x.copy())
    samples = []
    for k in range(1, steps + 1):
        step(model, state, theta, params)
        if k % thinning == 0:
            samples.append(record(state.x))
    return state, samples
