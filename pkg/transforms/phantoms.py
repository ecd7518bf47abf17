"""
Synthetic Images - Ground truths for the experiment presets
"""

from typing import Tuple

import numpy as np


def piecewise_constant_phantom(shape: Tuple[int, int],
                               rng: np.random.Generator,
                               n_rectangles: int = 6,
                               n_disks: int = 4,
                               background: float = 0.1) -> np.ndarray:
    """Random overlapping rectangles and disks with grey levels in [0, 1]"""
    H, W = shape
    image = np.full(shape, background)
    rows, cols = np.mgrid[0:H, 0:W]

    for _ in range(n_rectangles):
        r0, c0 = rng.integers(0, H - 1), rng.integers(0, W - 1)
        r1 = r0 + rng.integers(max(H // 16, 1), max(H // 3, 2))
        c1 = c0 + rng.integers(max(W // 16, 1), max(W // 3, 2))
        image[r0:r1, c0:c1] = rng.uniform(0.2, 1.0)

    for _ in range(n_disks):
        cr, cc = rng.uniform(0, H), rng.uniform(0, W)
        radius = rng.uniform(min(H, W) / 20, min(H, W) / 6)
        image[(rows - cr) ** 2 + (cols - cc) ** 2 <= radius ** 2] = rng.uniform(0.0, 1.0)
    return image


def laplace_coefficients(shape: Tuple[int, ...], theta: float, rng: np.random.Generator) -> np.ndarray:
    """Coefficients drawn from the prior exp(-theta ||x||_1)"""
    if theta <= 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    return rng.laplace(0.0, 1.0 / theta, size=shape)
