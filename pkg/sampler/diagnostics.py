"""
Chain Diagnostics - Log-probability traces, autocorrelation and integrated autocorrelation time
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from core.models import PosteriorModel, eval_log_posterior_unnorm

logger = logging.getLogger(__name__)

STABILISED_FRACTION = 0.05


@dataclass
class LogProbTrace:
    values: np.ndarray
    stabilised: bool


def is_stabilised(values: Sequence[float], fraction: float = STABILISED_FRACTION) -> bool:
    """
    Stable when the standard deviation over the last quarter of the trace is below
    ``fraction`` of the full trace range. A flat trace is stable.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return False
    span = float(values.max() - values.min())
    if span == 0:
        return True
    tail = values[-max(values.size // 4, 1):]
    return bool(np.std(tail) < fraction * span)


def log_prob_trace(model: PosteriorModel, states: Iterable, theta) -> LogProbTrace:
    """Unnormalised log-posterior of each state (arrays or ChainStates)"""
    values = np.array([
        eval_log_posterior_unnorm(model, getattr(s, "x", s), theta) for s in states
    ])
    return LogProbTrace(values=values, stabilised=is_stabilised(values))


def autocorrelation(series: Sequence[float], max_lag: int) -> np.ndarray:
    """Normalised sample autocorrelation for lags 0..max_lag"""
    x = np.asarray(series, dtype=float)
    if x.size <= max_lag:
        raise ValueError(f"Series of length {x.size} is too short for max_lag={max_lag}")
    x = x - x.mean()
    var = float(np.dot(x, x))
    if var == 0:
        raise ValueError("Autocorrelation of a constant series is undefined (zero variance)")
    n = x.size
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(x, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:max_lag + 1]
    return acov / var


def integrated_autocorr_time(series: Sequence[float], max_lag: Optional[int] = None) -> float:
    """Geyer's initial positive sequence estimate; 1.0 for uncorrelated draws"""
    x = np.asarray(series, dtype=float)
    max_lag = min(max_lag or x.size - 1, x.size - 1)
    rho = autocorrelation(x, max_lag)
    tau = -1.0
    for k in range(0, max_lag, 2):
        pair = rho[k] + rho[k + 1] if k + 1 <= max_lag else rho[k]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return max(tau, 1.0)


def effective_sample_size(series: Sequence[float]) -> float:
    return float(len(series) / integrated_autocorr_time(series))


def imbalance_ratio(posterior_series: Sequence[float], prior_series: Sequence[float]) -> float:
    """Ratio of integrated autocorrelation times, posterior over prior"""
    return integrated_autocorr_time(posterior_series) / integrated_autocorr_time(prior_series)


def chain_trace_frame(model: PosteriorModel,
                      samples: Sequence[np.ndarray],
                      theta,
                      thinning: int = 1,
                      start: int = 0) -> pd.DataFrame:
    """Columns: iteration, g_1..g_dTheta, log_prob"""
    stats = np.array([model.regulariser.statistics(x) for x in samples]).reshape(len(samples), -1)
    frame = pd.DataFrame({"iteration": start + thinning * np.arange(1, len(samples) + 1)})
    for i in range(stats.shape[1]):
        frame[f"g_{i + 1}"] = stats[:, i]
    frame["log_prob"] = log_prob_trace(model, samples, theta).values
    return frame
