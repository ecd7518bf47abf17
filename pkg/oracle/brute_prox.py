"""
Brute-force proximal operator by multi-start Nelder-Mead, for checking closed-form proxes
"""

import logging
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from core.errors import OracleConvergenceError, OracleError

logger = logging.getLogger(__name__)

MAX_DIM = 4


def brute_prox(g: Callable[[np.ndarray], float],
               lam: float,
               x,
               restarts: int = 6,
               tol: float = 1e-8,
               seed: Optional[int] = 0) -> np.ndarray:
    """
    argmin_u g(u) + ||u - x||^2 / (2 lam) for d <= 4.

    Starts at x, at zero and at random perturbations of x; each run is restarted from
    its own optimum once. Raises OracleConvergenceError when the best two optima disagree.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size > MAX_DIM:
        raise OracleError(f"Brute-force prox supports vectors of length <= {MAX_DIM}, got shape {x.shape}")
    if lam <= 0:
        raise OracleError(f"lambda must be positive, got {lam}")

    def objective(u):
        return float(g(u)) + float(np.sum((u - x) ** 2)) / (2.0 * lam)

    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(x))))
    starts = [x.copy(), np.zeros_like(x)]
    starts += [x + scale * rng.standard_normal(x.size) for _ in range(max(restarts - 2, 0))]

    options = {"xatol": tol * 1e-2, "fatol": tol * tol, "maxiter": 20000 * x.size, "maxfev": 40000 * x.size}
    found = []
    for start in starts:
        res = minimize(objective, start, method="Nelder-Mead", options=options)
        res = minimize(objective, res.x, method="Nelder-Mead", options=options)
        found.append((res.fun, res.x))

    found.sort(key=lambda item: item[0])
    best = found[0][1]
    spread = float(np.max(np.abs(found[1][1] - best))) if len(found) > 1 else 0.0
    if spread > np.sqrt(tol):
        raise OracleConvergenceError("Nelder-Mead starts disagree on the prox point", residual=spread)
    logger.debug(f"brute_prox: best objective {found[0][0]:.10g}, start spread {spread:.2e}")
    return best
