"""
Noise Synthesis - Gaussian and Laplace observation noise at a prescribed SNR
"""

import logging
from enum import Enum
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


def sigma2_from_snr(x: np.ndarray, snr_db: float) -> float:
    """sigma^2 such that 10 log10(||x||^2 / (d sigma^2)) = snr_db"""
    if not np.isfinite(snr_db):
        raise ValueError(f"SNR must be finite, got {snr_db}")
    energy = float(np.sum(np.asarray(x, dtype=np.float64) ** 2))
    if energy == 0:
        raise ValueError("Cannot set an SNR for an all-zero signal")
    return energy / x.size / 10.0 ** (snr_db / 10.0)


def sigma2_bounds_from_snr(x: np.ndarray, snr_low_db: float, snr_high_db: float) -> Tuple[float, float]:
    """(sigma2_min, sigma2_max) for an SNR known to lie in [snr_low_db, snr_high_db]"""
    if snr_low_db >= snr_high_db:
        raise ValueError(f"SNR range must be increasing, got [{snr_low_db}, {snr_high_db}]")
    return sigma2_from_snr(x, snr_high_db), sigma2_from_snr(x, snr_low_db)


def add_noise(x: np.ndarray,
              snr_db: float,
              kind: NoiseKind = NoiseKind.GAUSSIAN,
              seed: Optional[int] = None,
              rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, float]:
    """
    Return (x + w, sigma2) with w i.i.d. of variance sigma2 set by ``snr_db``.

    Laplace noise uses scale b = sqrt(sigma2 / 2) so the variance is the same.
    """
    sigma2 = sigma2_from_snr(x, snr_db)
    rng = rng if rng is not None else np.random.default_rng(seed)
    kind = NoiseKind(kind)
    if kind == NoiseKind.GAUSSIAN:
        w = np.sqrt(sigma2) * rng.standard_normal(x.shape)
    else:
        w = rng.laplace(0.0, np.sqrt(sigma2 / 2.0), size=x.shape)
    logger.debug(f"Added {kind.value} noise at {snr_db} dB (sigma2={sigma2:.4e})")
    return x + w, sigma2
