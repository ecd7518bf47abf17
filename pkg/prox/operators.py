"""
Proximal Operators - Closed-form and iterative proxes used by the Langevin kernels and the MAP solver
All operators take and return numpy arrays of the caller's shape
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from core.errors import DimensionError, ProxError

logger = logging.getLogger(__name__)

# Chambolle's projection step; convergence is observed in practice up to 1/4
TV_DUAL_STEP = 0.249
TV_DEFAULT_INNER_ITERS = 25


@dataclass
class ProxResult:
    """Output of an iterative proximal operator"""
    point: np.ndarray
    inner_iterations: int
    inner_residual: float


@dataclass
class TvDualCache:
    """Dual variable of the TV prox, carried between calls by a single chain"""
    dual: Optional[np.ndarray] = None
    calls: int = field(default=0)

    def reset(self):
        self.dual = None
        self.calls = 0


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    """Prox of t*||.||_1: component-wise sign(x)*max(|x|-t, 0)"""
    if t < 0:
        raise ValueError(f"Threshold must be nonnegative, got {t}")
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def prox_squared_l2(x: np.ndarray, t: float) -> np.ndarray:
    """Prox of t*||.||^2"""
    if t < 0:
        raise ValueError(f"Weight must be nonnegative, got {t}")
    return x / (1.0 + 2.0 * t)


def project_nonneg(x: np.ndarray) -> np.ndarray:
    """Projection onto the nonnegative orthant"""
    return np.maximum(x, 0.0)


def project_linf_ball(x: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Projection onto {z : ||z||_inf <= radius}"""
    return np.clip(x, -radius, radius)


def prox_l1_residual(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    """Prox of t*||y - .||_1, i.e. y + soft_threshold(x - y, t)"""
    if x.shape != y.shape:
        raise DimensionError("y", x.shape, y.shape)
    return y + soft_threshold(x - y, t)


def prox_weighted_l1_blocks(x: np.ndarray,
                            theta: Sequence[float],
                            blocks: Sequence[np.ndarray],
                            lam: float = 1.0) -> np.ndarray:
    """
    Prox of lam * sum_j theta_j ||x[A_j]||_1.

    ``blocks`` holds flat index arrays into ``x.ravel()`` that partition the indices.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if len(theta) != len(blocks):
        raise DimensionError("theta", len(blocks), len(theta))
    if np.any(theta < 0):
        raise ValueError(f"Block weights must be nonnegative, got {theta}")
    covered = sum(len(b) for b in blocks)
    if covered != x.size:
        raise DimensionError("blocks", x.size, covered)

    thresholds = np.empty(x.size)
    for weight, index in zip(theta, blocks):
        thresholds[index] = lam * weight
    flat = x.ravel()
    return (np.sign(flat) * np.maximum(np.abs(flat) - thresholds, 0.0)).reshape(x.shape)


def image_gradient(u: np.ndarray) -> np.ndarray:
    """Forward differences with replicate (Neumann) boundary, stacked as (2, H, W)"""
    grad = np.zeros((2,) + u.shape)
    grad[0, :-1, :] = u[1:, :] - u[:-1, :]
    grad[1, :, :-1] = u[:, 1:] - u[:, :-1]
    return grad


def _backward_difference(q: np.ndarray, axis: int) -> np.ndarray:
    # last entry along ``axis`` is outside the range of image_gradient, so it counts as zero
    q = np.moveaxis(q, axis, 0).copy()
    q[-1] = 0.0
    out = q.copy()
    out[1:] -= q[:-1]
    return np.moveaxis(out, 0, axis)


def image_divergence(p: np.ndarray) -> np.ndarray:
    """Negative adjoint of image_gradient; single-row and single-column images included"""
    return _backward_difference(p[0], 0) + _backward_difference(p[1], 1)


def tv_iso(x: np.ndarray) -> float:
    """Isotropic total variation sum_i ||(grad x)_i||_2"""
    grad = image_gradient(x)
    return float(np.sum(np.sqrt(grad[0] ** 2 + grad[1] ** 2)))


def prox_tv_iso(x: np.ndarray,
                weight: float,
                inner_iters: int = TV_DEFAULT_INNER_ITERS,
                cache: Optional[TvDualCache] = None,
                tol: Optional[float] = None) -> ProxResult:
    """
    Approximate prox of weight*TV for a 2-D image via Chambolle's dual projection iteration.

    The output is x - weight*div(p), so the image mean is preserved exactly. When a cache
    is given, the dual variable starts from the previous call's value and is written back.
    """
    if x.ndim != 2:
        raise DimensionError("x", "2-D image", x.shape)
    if inner_iters < 1:
        raise ValueError(f"inner_iters must be >= 1, got {inner_iters}")
    if weight < 0:
        raise ValueError(f"TV weight must be nonnegative, got {weight}")
    if not np.all(np.isfinite(x)):
        raise ProxError("Non-finite input to TV prox")
    if weight == 0:
        return ProxResult(point=x.copy(), inner_iterations=0, inner_residual=0.0)

    if cache is not None and cache.dual is not None and cache.dual.shape == (2,) + x.shape:
        p = cache.dual.copy()
    else:
        p = np.zeros((2,) + x.shape)

    scaled = x / weight
    p_prev = p
    for _ in range(inner_iters):
        p_prev = p
        grad = image_gradient(image_divergence(p) - scaled)
        norm = np.sqrt(grad[0] ** 2 + grad[1] ** 2)
        p = (p + TV_DUAL_STEP * grad) / (1.0 + TV_DUAL_STEP * norm)

    point = x - weight * image_divergence(p)
    previous = x - weight * image_divergence(p_prev)
    residual = float(np.linalg.norm(point - previous) / max(np.linalg.norm(point), 1e-12))

    if not np.all(np.isfinite(point)):
        raise ProxError("TV prox produced non-finite output", residual, inner_iters)
    if tol is not None and residual > tol:
        logger.warning(f"TV prox residual {residual:.2e} above tolerance {tol:.2e} after {inner_iters} iterations")

    if cache is not None:
        cache.dual = p
        cache.calls += 1

    return ProxResult(point=point, inner_iterations=inner_iters, inner_residual=residual)
