"""
Likelihoods - Data-fidelity terms f_y for linear observation models y = A x + w
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from core.models import LikelihoodSpec
from prox.operators import prox_l1_residual

logger = logging.getLogger(__name__)

LinearMap = Callable[[np.ndarray], np.ndarray]


def _identity(x: np.ndarray) -> np.ndarray:
    return x


def gaussian_likelihood(y: np.ndarray,
                        sigma2: float,
                        forward: Optional[LinearMap] = None,
                        adjoint: Optional[LinearMap] = None,
                        op_norm_sq: float = 1.0,
                        preconditioner: Optional[LinearMap] = None) -> LikelihoodSpec:
    """f_y(x) = ||y - A x||^2 / (2 sigma^2), L_y = ||A||^2 / sigma^2"""
    if not sigma2 > 0:
        raise ValueError(f"Noise variance must be > 0, got {sigma2}")
    forward = forward or _identity
    adjoint = adjoint or _identity

    def evaluate(x):
        r = forward(x) - y
        return float(np.sum(r * r) / (2.0 * sigma2))

    def grad(x):
        return adjoint(forward(x) - y) / sigma2

    return LikelihoodSpec(
        eval=evaluate,
        grad=grad,
        lipschitz=op_norm_sq / sigma2,
        preconditioner=preconditioner,
        name="gaussian",
    )


def laplace_likelihood(y: np.ndarray,
                       scale: float,
                       smoothing: float,
                       forward: Optional[LinearMap] = None,
                       adjoint: Optional[LinearMap] = None,
                       op_norm_sq: float = 1.0) -> LikelihoodSpec:
    """
    Laplace noise f_y(x) = ||y - A x||_1 / b, replaced by its ``smoothing``-Moreau envelope
    in the argument u = A x so that it has a (||A||^2 / smoothing)-Lipschitz gradient.
    ``eval`` returns the envelope value, consistent with ``grad``.
    """
    if not scale > 0:
        raise ValueError(f"Laplace scale must be > 0, got {scale}")
    if not smoothing > 0:
        raise ValueError(f"Envelope smoothing must be > 0, got {smoothing}")
    forward = forward or _identity
    adjoint = adjoint or _identity
    threshold = smoothing / scale

    def evaluate(x):
        u = forward(x)
        p = prox_l1_residual(u, y, threshold)
        return float(np.sum(np.abs(y - p)) / scale + np.sum((u - p) ** 2) / (2.0 * smoothing))

    def grad(x):
        u = forward(x)
        return adjoint(u - prox_l1_residual(u, y, threshold)) / smoothing

    return LikelihoodSpec(
        eval=evaluate,
        grad=grad,
        lipschitz=op_norm_sq / smoothing,
        name="laplace-moreau",
    )


@dataclass(frozen=True, eq=False)
class GaussianObservation:
    """y = A x + N(0, sigma^2 I) with sigma^2 unknown; builds f_y for any sigma^2"""
    y: np.ndarray
    forward: LinearMap = _identity
    adjoint: LinearMap = _identity
    op_norm_sq: float = 1.0

    @property
    def obs_dim(self) -> int:
        return int(self.y.size)

    def likelihood(self, sigma2: float) -> LikelihoodSpec:
        return gaussian_likelihood(self.y, sigma2, self.forward, self.adjoint, self.op_norm_sq)

    def residual_sq(self, x: np.ndarray) -> float:
        r = self.y - self.forward(x)
        return float(np.sum(r * r))

    def lipschitz(self, sigma2: float) -> float:
        return self.op_norm_sq / sigma2
