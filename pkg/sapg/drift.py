"""
Log-partition Drifts - Closed-form -grad_theta log Z(theta) for homogeneous regularisers
"""

from typing import Sequence, Tuple, Union

import numpy as np

from core.models import Block


def grad_logz_drift_homogeneous(d_eff: int, alpha: float, theta) -> np.ndarray:
    """d_eff / (alpha * theta), from d/dtheta log Z(theta) = -d_eff / (alpha * theta)"""
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any(theta <= 0):
        raise ValueError(f"theta must be > 0, got {theta}")
    return d_eff / (alpha * theta)


def grad_logz_drift_separable(blocks: Sequence[Union[Block, Tuple[int, float]]], theta) -> np.ndarray:
    """|A_i| / (alpha_i * theta_i) per block; blocks are Block objects or (size, alpha) pairs"""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if len(blocks) != theta.size:
        raise ValueError(f"{len(blocks)} blocks for {theta.size} parameters")
    if np.any(theta <= 0):
        raise ValueError(f"theta must be > 0, got {theta}")
    sizes = np.array([b.size if isinstance(b, Block) else b[0] for b in blocks], dtype=float)
    alphas = np.array([b.alpha if isinstance(b, Block) else b[1] for b in blocks], dtype=float)
    return sizes / (alphas * theta)
