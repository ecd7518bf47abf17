"""
Image Metrics - MSE in dB and PSNR = -10 log10(||x - ref||^2 / d)

A zero error has no finite PSNR; it is reported as PSNR_SENTINEL (and -PSNR_SENTINEL for mse_db).
"""

import numpy as np

from core.errors import DimensionError

PSNR_SENTINEL = 999.0


def mse(x: np.ndarray, ref: np.ndarray) -> float:
    if np.shape(x) != np.shape(ref):
        raise DimensionError("x", np.shape(ref), np.shape(x))
    return float(np.mean((np.asarray(x, dtype=np.float64) - ref) ** 2))


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    err = mse(x, ref)
    if err == 0:
        return PSNR_SENTINEL
    return float(-10.0 * np.log10(err))


def mse_db(x: np.ndarray, ref: np.ndarray) -> float:
    """10 log10 of the mean squared error; equals -psnr"""
    return -psnr(x, ref)
