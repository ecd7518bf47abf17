"""
Regularisers - Concrete theta^T g(x) terms with their statistics and composite proxes
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from core.models import (
    Block,
    General,
    Homogeneous,
    RegulariserSpec,
    SeparablyHomogeneous,
)
from prox.operators import (
    TvDualCache,
    prox_squared_l2,
    prox_tv_iso,
    prox_weighted_l1_blocks,
    soft_threshold,
    tv_iso,
)


def l1_regulariser(shape: Tuple[int, ...], ridge: float = 0.0) -> RegulariserSpec:
    """
    g(x) = ||x||_1 + ridge*||x||^2.

    With ridge = 0 the term is 1-homogeneous; a positive ridge makes the prior strongly
    log-concave but breaks homogeneity, so the two-chain algorithm is required.
    """
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    dim = int(np.prod(shape))

    def stat(x):
        return np.array([np.sum(np.abs(x)) + ridge * np.sum(x * x)])

    def prox(x, theta, lam):
        t = lam * float(theta[0])
        return soft_threshold(x, t) / (1.0 + 2.0 * t * ridge)

    return RegulariserSpec(
        stat=stat,
        prox=prox,
        homogeneity=Homogeneous(alpha=1.0) if ridge == 0 else General(),
        effective_dim=dim,
        name="l1" if ridge == 0 else f"l1+{ridge:g}*l2^2",
    )


def quadratic_regulariser(shape: Tuple[int, ...], as_gradient: bool = False) -> RegulariserSpec:
    """
    g(x) = ||x||^2 (2-homogeneous), i.e. a Gaussian prior with precision 2*theta.

    ``as_gradient`` routes the term through ``smooth_grad`` instead of the prox.
    """
    dim = int(np.prod(shape))

    def stat(x):
        return np.array([np.sum(x * x)])

    def prox(x, theta, lam):
        return prox_squared_l2(x, lam * float(theta[0]))

    def smooth_grad(x, theta):
        return 2.0 * float(theta[0]) * x

    return RegulariserSpec(
        stat=stat,
        prox=None if as_gradient else prox,
        smooth_grad=smooth_grad if as_gradient else None,
        smooth_lipschitz=(lambda theta: 2.0 * float(theta[0])) if as_gradient else None,
        homogeneity=Homogeneous(alpha=2.0),
        effective_dim=dim,
        name="squared-l2",
    )


def block_l1_regulariser(shape: Tuple[int, ...], blocks: Sequence[Block]) -> RegulariserSpec:
    """g_i(x) = ||x[A_i]||_1, one parameter per block"""
    blocks = tuple(blocks)
    index_sets = [b.indices for b in blocks]

    def stat(x):
        flat = np.abs(x.ravel())
        return np.array([np.sum(flat[index]) for index in index_sets])

    def prox(x, theta, lam):
        return prox_weighted_l1_blocks(x, theta, index_sets, lam)

    return RegulariserSpec(
        stat=stat,
        prox=prox,
        homogeneity=SeparablyHomogeneous(blocks=blocks),
        effective_dim=int(np.prod(shape)),
        n_params=len(blocks),
        name=f"block-l1[{len(blocks)}]",
    )


def elastic_net_regulariser(shape: Tuple[int, ...]) -> RegulariserSpec:
    """g(x) = (||x||_1, ||x||^2 / 2): the l1 part through the prox, the quadratic part as a gradient"""
    dim = int(np.prod(shape))

    def stat(x):
        return np.array([np.sum(np.abs(x)), 0.5 * np.sum(x * x)])

    def prox(x, theta, lam):
        return soft_threshold(x, lam * float(theta[0]))

    def smooth_grad(x, theta):
        return float(theta[1]) * x

    return RegulariserSpec(
        stat=stat,
        prox=prox,
        smooth_grad=smooth_grad,
        smooth_lipschitz=lambda theta: float(theta[1]),
        homogeneity=General(),
        effective_dim=dim,
        n_params=2,
        name="elastic-net",
    )


def tv_regulariser(shape: Tuple[int, int],
                   inner_iters: int = 25,
                   effective_dim: Optional[int] = None,
                   warm_start: bool = True) -> RegulariserSpec:
    """
    Isotropic total variation. The TV prior is improper along constants, so the
    effective dimension defaults to d - 1. With ``warm_start`` each chain keeps the
    dual variable of its last prox call.
    """
    if len(shape) != 2:
        raise ValueError(f"TV regulariser needs a 2-D shape, got {shape}")
    dim = int(np.prod(shape))

    def stat(x):
        return np.array([tv_iso(x)])

    def prox(x, theta, lam, cache: Optional[TvDualCache] = None):
        return prox_tv_iso(x, lam * float(theta[0]), inner_iters=inner_iters, cache=cache).point

    return RegulariserSpec(
        stat=stat,
        prox=prox,
        homogeneity=Homogeneous(alpha=1.0),
        effective_dim=dim - 1 if effective_dim is None else effective_dim,
        name="tv-iso",
        uses_cache=warm_start,
    )


def zero_regulariser(shape: Tuple[int, ...]) -> RegulariserSpec:
    """g = 0: the prox is the identity. Useful for unregularised fits and kernel checks."""

    def stat(x):
        return np.zeros(1)

    def prox(x, theta, lam):
        return x.copy()

    return RegulariserSpec(
        stat=stat,
        prox=prox,
        homogeneity=General(),
        effective_dim=int(np.prod(shape)),
        name="zero",
    )
