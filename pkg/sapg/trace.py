"""
Theta Trace - Per-iteration record of a SAPG run and its CSV-ready frame
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from sapg.schedules import WeightScheme, weighted_average

logger = logging.getLogger(__name__)

GRAD_WINDOW = 50


@dataclass
class SaturationRecord:
    """theta (or sigma2) hit a projection bound"""
    n: int
    parameter: str
    bound: str
    value: float

    def to_dict(self):
        return {"n": self.n, "parameter": self.parameter, "bound": self.bound, "value": self.value}


@dataclass
class ThetaTrace:
    """
    Row n holds theta_n with the step size, gradient estimate and statistics that produced it.
    Row 0 is the initial point. Running averages use ``weights`` and are NaN while all
    weights seen so far are zero.
    """
    n_params: int
    weights: WeightScheme
    track_sigma: bool = False
    stage: int = 1
    ns: List[int] = field(default_factory=list)
    deltas: List[float] = field(default_factory=list)
    thetas: List[np.ndarray] = field(default_factory=list)
    theta_bars: List[np.ndarray] = field(default_factory=list)
    grads: List[np.ndarray] = field(default_factory=list)
    g_values: List[np.ndarray] = field(default_factory=list)
    g_prior_values: List[np.ndarray] = field(default_factory=list)
    sigma2s: List[float] = field(default_factory=list)
    sigma2_bars: List[float] = field(default_factory=list)
    saturations: List[SaturationRecord] = field(default_factory=list)
    _w_sum: float = 0.0
    _theta_sum: Optional[np.ndarray] = None
    _sigma_sum: float = 0.0

    @property
    def iterations(self) -> int:
        return max(len(self.ns) - 1, 0)

    @property
    def theta_bar(self) -> np.ndarray:
        return self.theta_bars[-1] if self.theta_bars else np.full(self.n_params, np.nan)

    @property
    def sigma2_bar(self) -> float:
        return self.sigma2_bars[-1] if self.sigma2_bars else float("nan")

    def record(self,
               theta: np.ndarray,
               delta: float = float("nan"),
               grad: Optional[np.ndarray] = None,
               g_mean: Optional[np.ndarray] = None,
               g_prior_mean: Optional[np.ndarray] = None,
               sigma2: Optional[float] = None):
        n = len(self.ns)
        theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
        nan_vec = np.full(self.n_params, np.nan)

        w = self.weights.weight(n)
        self._w_sum += w
        self._theta_sum = w * theta if self._theta_sum is None else self._theta_sum + w * theta
        bar = self._theta_sum / self._w_sum if self._w_sum > 0 else nan_vec

        self.ns.append(n)
        self.deltas.append(float(delta))
        self.thetas.append(theta)
        self.theta_bars.append(bar)
        self.grads.append(nan_vec if grad is None else np.atleast_1d(grad).astype(float))
        self.g_values.append(nan_vec if g_mean is None else np.atleast_1d(g_mean).astype(float))
        self.g_prior_values.append(nan_vec if g_prior_mean is None else np.atleast_1d(g_prior_mean).astype(float))

        if self.track_sigma:
            sigma2 = float("nan") if sigma2 is None else float(sigma2)
            self._sigma_sum += w * sigma2
            self.sigma2s.append(sigma2)
            self.sigma2_bars.append(self._sigma_sum / self._w_sum if self._w_sum > 0 else float("nan"))

    def flag_saturation(self, parameter: str, bound: str, value: float):
        n = len(self.ns)
        # one warning per run of consecutive saturated iterations
        previous = [s for s in self.saturations if s.parameter == parameter]
        if not previous or previous[-1].n != n - 1:
            logger.warning(f"{parameter} saturates the {bound} bound ({value:.4e}) at iteration {n}")
        self.saturations.append(SaturationRecord(n, parameter, bound, float(value)))

    def grad_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(g) if np.all(np.isfinite(g)) else np.nan for g in self.grads])

    def check_averages(self, rtol: float = 1e-9) -> bool:
        """Recompute every running average from the raw theta_n and the weights"""
        thetas = np.array(self.thetas)
        for n, bar in enumerate(self.theta_bars):
            if not np.all(np.isfinite(bar)):
                continue
            expected = weighted_average(thetas, self.weights, upto=n + 1)
            if not np.allclose(bar, expected, rtol=rtol, atol=0.0):
                raise ValueError(f"Running average at n={n} does not match recomputation")
        return True

    def to_frame(self) -> pd.DataFrame:
        self.check_averages()
        frame = pd.DataFrame({"n": self.ns, "delta_n": self.deltas})
        thetas = np.array(self.thetas).reshape(-1, self.n_params)
        bars = np.array(self.theta_bars).reshape(-1, self.n_params)
        gs = np.array(self.g_values).reshape(-1, self.n_params)
        for i in range(self.n_params):
            frame[f"theta_{i + 1}"] = thetas[:, i]
        for i in range(self.n_params):
            frame[f"theta_bar_{i + 1}"] = bars[:, i]
        frame["grad_norm"] = self.grad_norms()
        for i in range(self.n_params):
            frame[f"g_{i + 1}"] = gs[:, i]
        priors = np.array(self.g_prior_values).reshape(-1, self.n_params)
        if np.any(np.isfinite(priors)):
            for i in range(self.n_params):
                frame[f"g_prior_{i + 1}"] = priors[:, i]
        if self.track_sigma:
            frame["sigma2"] = self.sigma2s
            frame["sigma2_bar"] = self.sigma2_bars
        frame["stage"] = self.stage
        return frame


def grad_residual_windows(grad_norms, window: int = GRAD_WINDOW, start: int = 0) -> pd.DataFrame:
    """Mean of ||Delta|| over consecutive windows of ``window`` iterations from ``start``"""
    values = np.asarray(grad_norms, dtype=float)[start:]
    rows = []
    for begin in range(0, len(values) - window + 1, window):
        chunk = values[begin:begin + window]
        rows.append({
            "window_start": start + begin,
            "window_end": start + begin + window - 1,
            "mean_grad_norm": float(np.nanmean(chunk)),
        })
    return pd.DataFrame(rows, columns=["window_start", "window_end", "mean_grad_norm"])
