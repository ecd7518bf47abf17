"""
Schedules - Step sizes, averaging weights, projection onto Theta and the stopping rule
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from core.models import ThetaDomain

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StepSchedule:
    """delta_n = c0 * n^-p, optionally scaled per component by a diagonal D"""
    c0: float
    exponent: float = 0.8
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError(f"c0 must be > 0, got {self.c0}")
        if not 0.6 <= self.exponent <= 0.9:
            raise ValueError(f"Step exponent must lie in [0.6, 0.9], got {self.exponent}")
        if self.scale is not None:
            scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
            if np.any(scale <= 0):
                raise ValueError(f"Step scales must be > 0, got {scale}")
            object.__setattr__(self, "scale", scale)

    def __call__(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"Step sizes are defined for n >= 1, got {n}")
        return self.c0 * float(n) ** (-self.exponent)

    def scales(self, dim: int) -> np.ndarray:
        if self.scale is None:
            return np.ones(dim)
        if self.scale.size == 1:
            return np.full(dim, self.scale[0])
        if self.scale.size != dim:
            raise ValueError(f"Step scale has {self.scale.size} entries for {dim} parameters")
        return self.scale

    @classmethod
    def default_for(cls, theta0: Sequence[float], dim: int, exponent: float = 0.8) -> "StepSchedule":
        """Guideline c0 = (theta0 * d)^-1, using the smallest theta0 component"""
        return cls(c0=1.0 / (float(np.min(theta0)) * dim), exponent=exponent)


class WeightTail(str, Enum):
    UNIFORM = "uniform"
    DECREASING = "decreasing"


@dataclass(frozen=True)
class WeightScheme:
    """
    omega_n = 0 for n < n0, 1 for n0 <= n <= n1, and beyond n1 either 1 (uniform tail)
    or tail_c0 * n^-tail_exponent (decreasing tail). n1 = None means no third phase.
    """
    n0: int = 0
    n1: Optional[int] = None
    tail: WeightTail = WeightTail.UNIFORM
    tail_c0: float = 1.0
    tail_exponent: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "tail", WeightTail(self.tail))
        if self.n0 < 0:
            raise ValueError(f"n0 must be >= 0, got {self.n0}")
        if self.n1 is not None and self.n1 <= self.n0:
            raise ValueError(f"n1 must be > n0, got n0={self.n0}, n1={self.n1}")

    def weight(self, n: int) -> float:
        if n < self.n0:
            return 0.0
        if self.n1 is None or n <= self.n1 or self.tail == WeightTail.UNIFORM:
            return 1.0
        return self.tail_c0 * float(n) ** (-self.tail_exponent)

    def weights(self, count: int) -> np.ndarray:
        return np.array([self.weight(n) for n in range(count)])


@dataclass(frozen=True)
class StopRule:
    """Stop when max_i |bar_theta_{N+1}^i - bar_theta_N^i| / bar_theta_N^i < tol, or at max_iters"""
    tol: float = 1e-3
    max_iters: int = 1000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"Tolerance must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


def weighted_average(thetas, weights: WeightScheme, upto: Optional[int] = None) -> np.ndarray:
    """
    sum_n omega_n theta_n / sum_n omega_n over n = 0..upto-1.

    ``thetas`` is indexed by iteration n (row n holds theta_n).
    """
    values = np.asarray(getattr(thetas, "thetas", thetas), dtype=float)
    values = values.reshape(len(values), -1)
    upto = len(values) if upto is None else upto
    if upto > len(values):
        raise ValueError(f"Requested {upto} iterates, only {len(values)} recorded")
    w = weights.weights(upto)
    total = w.sum()
    if total == 0:
        raise ValueError("All averaging weights are zero")
    return (w[:, None] * values[:upto]).sum(axis=0) / total


def project_eta(eta, domain: ThetaDomain) -> np.ndarray:
    """Clamp eta = log(theta) onto log(Theta)"""
    return np.clip(np.atleast_1d(eta), np.log(domain.lower), np.log(domain.upper))


def project_theta(theta, domain: ThetaDomain, log_scale: bool = False) -> np.ndarray:
    """Component-wise projection onto Theta; in log scale the clamp acts on eta = log(theta)"""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if log_scale:
        with np.errstate(divide="ignore"):
            eta = np.log(np.maximum(theta, 0.0))
        theta = np.exp(project_eta(eta, domain))
    return np.clip(theta, domain.lower, domain.upper)


def relative_change(previous: np.ndarray, current: np.ndarray) -> float:
    """max_i |current_i - previous_i| / |previous_i|"""
    previous = np.atleast_1d(previous)
    current = np.atleast_1d(current)
    return float(np.max(np.abs(current - previous) / np.abs(previous)))


def stop_check(trace, rule: StopRule) -> bool:
    """
    True once the last two finite running averages differ by less than ``rule.tol``
    (relative, infinity norm) or the iteration budget is spent.

    ``trace`` is a ThetaTrace or an array of running averages, one row per iteration.
    """
    averages = np.asarray(getattr(trace, "theta_bars", trace), dtype=float)
    averages = averages.reshape(len(averages), -1)
    iterations = getattr(trace, "iterations", len(averages) - 1)
    if iterations >= rule.max_iters:
        return True
    finite = averages[np.all(np.isfinite(averages), axis=1)]
    if len(finite) < 2:
        return False
    return relative_change(finite[-2], finite[-1]) < rule.tol
