"""
Closed-form oracles for Gaussian toys
"""

import numpy as np

from core.errors import OracleError


def gaussian_log_marginal(y: np.ndarray, sigma2: float, theta: float, precision_scale: float = 2.0) -> float:
    """log p(y | theta) for y = x + noise, x ~ N(0, I / (precision_scale * theta)), noise ~ N(0, sigma2 I)"""
    y = np.asarray(y, dtype=float).ravel()
    var = sigma2 + 1.0 / (precision_scale * theta)
    return float(-0.5 * y.size * np.log(2.0 * np.pi * var) - 0.5 * np.sum(y * y) / var)


def gaussian_marginal_grad(y: np.ndarray, sigma2: float, theta: float, precision_scale: float = 2.0) -> float:
    """d/dtheta of gaussian_log_marginal"""
    y = np.asarray(y, dtype=float).ravel()
    var = sigma2 + 1.0 / (precision_scale * theta)
    dvar = -1.0 / (precision_scale * theta * theta)
    return float((-0.5 * y.size / var + 0.5 * np.sum(y * y) / (var * var)) * dvar)


def gaussian_marginal_mle(y: np.ndarray,
                          sigma2: float,
                          upper: float = np.inf,
                          precision_scale: float = 2.0) -> float:
    """
    argmax_theta p(y | theta) for the Gaussian toy.

    With s = ||y||^2 / d the maximiser is 1 / (precision_scale * (s - sigma2)) when s > sigma2;
    otherwise the likelihood increases with theta and the upper bound is returned.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0 or not np.any(y):
        raise OracleError("Marginal MLE is undefined for an all-zero observation")
    if sigma2 <= 0:
        raise OracleError(f"sigma2 must be positive, got {sigma2}")
    excess = float(np.mean(y * y)) - sigma2
    if excess <= 0:
        return float(upper)
    return float(min(1.0 / (precision_scale * excess), upper))


def ula_gaussian_stationary_variance(gamma: float, s2: float) -> float:
    """Per-coordinate variance of ULA targeting N(0, s2): s2 / (1 - gamma / (2 s2)), for 0 < gamma < 2 s2"""
    if s2 <= 0:
        raise ValueError(f"s2 must be positive, got {s2}")
    if not 0 < gamma < 2.0 * s2:
        raise ValueError(f"ULA is unstable for gamma={gamma} with target variance {s2}")
    return s2 / (1.0 - gamma / (2.0 * s2))
