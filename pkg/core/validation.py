"""
Model Validation - Randomised property checks run when a model is registered
Gradient vs finite differences, Lipschitz bound, convexity along segments, homogeneity
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from core.models import (
    Homogeneous,
    LikelihoodSpec,
    PosteriorModel,
    RegulariserSpec,
    SeparablyHomogeneous,
)

logger = logging.getLogger(__name__)


@dataclass
class CheckReport:
    """Outcome of one property check"""
    name: str
    passed: bool
    worst: float
    trials: int
    details: List[str] = field(default_factory=list)


def _random_points(shape, n, rng, scale=1.0):
    return [scale * rng.standard_normal(shape) for _ in range(n)]


def check_gradient(fun: Callable[[np.ndarray], float],
                   grad: Callable[[np.ndarray], np.ndarray],
                   shape,
                   rng: np.random.Generator,
                   n_points: int = 20,
                   rel_tol: float = 1e-5,
                   h: float = 1e-6) -> CheckReport:
    """
    Directional central differences: (f(x+hv) - f(x-hv)) / 2h against <grad(x), v>
    for a random unit direction v at each point.
    """
    worst = 0.0
    for x in _random_points(shape, n_points, rng):
        v = rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        fd = (fun(x + h * v) - fun(x - h * v)) / (2.0 * h)
        an = float(np.sum(grad(x) * v))
        err = abs(fd - an) / max(abs(an), abs(fd), 1.0)
        worst = max(worst, err)
    return CheckReport("gradient", worst < rel_tol, worst, n_points)


def check_lipschitz(grad: Callable[[np.ndarray], np.ndarray],
                    lipschitz: float,
                    shape,
                    rng: np.random.Generator,
                    n_pairs: int = 20,
                    slack: float = 1e-6) -> CheckReport:
    """||grad(u) - grad(v)|| <= L ||u - v|| on random pairs; ``worst`` is the largest observed ratio / L"""
    worst = 0.0
    for _ in range(n_pairs):
        u, v = rng.standard_normal(shape), rng.standard_normal(shape)
        ratio = np.linalg.norm(grad(u) - grad(v)) / (lipschitz * np.linalg.norm(u - v))
        worst = max(worst, float(ratio))
    return CheckReport("lipschitz", worst <= 1.0 + slack, worst, n_pairs)


def check_convexity(stat: Callable[[np.ndarray], np.ndarray],
                    shape,
                    rng: np.random.Generator,
                    n_segments: int = 20,
                    slack: float = 1e-9) -> CheckReport:
    """g(t x + (1-t) z) <= t g(x) + (1-t) g(z), component-wise"""
    worst = -np.inf
    for _ in range(n_segments):
        x, z = rng.standard_normal(shape), rng.standard_normal(shape)
        t = rng.uniform()
        lhs = np.atleast_1d(stat(t * x + (1 - t) * z))
        rhs = t * np.atleast_1d(stat(x)) + (1 - t) * np.atleast_1d(stat(z))
        excess = np.max((lhs - rhs) / np.maximum(np.abs(rhs), 1.0))
        worst = max(worst, float(excess))
    return CheckReport("convexity", worst <= slack, worst, n_segments)


def check_homogeneity(reg: RegulariserSpec,
                      shape,
                      rng: np.random.Generator,
                      n_trials: int = 20,
                      rel_tol: float = 1e-8) -> CheckReport:
    """Empirical check of the declared homogeneity degree(s)"""
    hom = reg.homogeneity
    if isinstance(hom, Homogeneous):
        alphas = np.full(reg.n_params, hom.alpha)
    elif isinstance(hom, SeparablyHomogeneous):
        alphas = hom.alphas
    else:
        return CheckReport("homogeneity", True, 0.0, 0, ["general regulariser: nothing to check"])

    worst = 0.0
    for _ in range(n_trials):
        x = rng.standard_normal(shape)
        t = float(rng.uniform(0.1, 5.0))
        lhs = reg.statistics(t * x)
        rhs = t ** alphas * reg.statistics(x)
        err = np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300))
        worst = max(worst, float(err))
    return CheckReport("homogeneity", worst < rel_tol, worst, n_trials)


def validate_likelihood(lik: LikelihoodSpec, shape, seed: int = 0) -> List[CheckReport]:
    rng = np.random.default_rng(seed)
    return [
        check_gradient(lik.eval, lik.grad, shape, rng),
        check_lipschitz(lik.grad, lik.lipschitz, shape, rng),
    ]


def validate_model(model: PosteriorModel,
                   seed: int = 0,
                   strict: bool = True,
                   checks: Optional[List[str]] = None) -> List[CheckReport]:
    """
    Run the registration-time property checks on a model.

    With ``strict`` a failed check raises ValueError; otherwise failures are logged.
    """
    rng = np.random.default_rng(seed)
    wanted = set(checks or ["gradient", "lipschitz", "convexity", "homogeneity"])
    reports = []
    if "gradient" in wanted:
        reports.append(check_gradient(model.likelihood.eval, model.likelihood.grad, model.shape, rng))
    if "lipschitz" in wanted:
        reports.append(check_lipschitz(model.likelihood.grad, model.likelihood.lipschitz, model.shape, rng))
    if "convexity" in wanted:
        reports.append(check_convexity(model.regulariser.statistics, model.shape, rng))
    if "homogeneity" in wanted:
        reports.append(check_homogeneity(model.regulariser, model.shape, rng))

    failed = [r for r in reports if not r.passed]
    for report in failed:
        logger.warning(f"Model '{model.name}' failed {report.name} check (worst={report.worst:.3e})")
    if failed and strict:
        names = ", ".join(r.name for r in failed)
        raise ValueError(f"Model '{model.name}' failed property checks: {names}")
    return reports
