"""
Circulant Blur - Convolution with periodic boundary, applied in the Fourier domain
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from core.errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CirculantBlur:
    """
    Circular convolution with a small 2-D point spread function.

    The PSF is centred at (k0, k1) = (rows // 2, cols // 2); a delta at that pixel is mapped
    onto the PSF placed in the top-left corner.
    """
    psf: np.ndarray
    shape: Tuple[int, int]
    otf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        psf = np.asarray(self.psf, dtype=np.float64)
        shape = tuple(int(s) for s in self.shape)
        if psf.ndim != 2 or len(shape) != 2:
            raise DimensionError("psf", "2-D kernel and 2-D image shape", (psf.shape, shape))
        if psf.shape[0] > shape[0] or psf.shape[1] > shape[1]:
            raise DimensionError("psf", f"kernel no larger than {shape}", psf.shape)
        total = psf.sum()
        if not np.isclose(total, 1.0, rtol=1e-12, atol=1e-12):
            raise ValueError(f"PSF entries must sum to 1, got {total}")

        padded = np.zeros(shape)
        padded[:psf.shape[0], :psf.shape[1]] = psf
        padded = np.roll(padded, (-(psf.shape[0] // 2), -(psf.shape[1] // 2)), axis=(0, 1))
        object.__setattr__(self, "psf", psf)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "otf", np.fft.fft2(padded))

    @property
    def op_norm_sq(self) -> float:
        """||A||^2 = max |OTF|^2"""
        return float(np.max(np.abs(self.otf)) ** 2)

    def _check(self, x: np.ndarray):
        if x.shape != self.shape:
            raise DimensionError("x", self.shape, x.shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        return np.real(np.fft.ifft2(self.otf * np.fft.fft2(x)))

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        return np.real(np.fft.ifft2(np.conj(self.otf) * np.fft.fft2(x)))


def uniform_blur(shape: Tuple[int, int], size: int = 9) -> CirculantBlur:
    """size x size box blur"""
    if size < 1:
        raise ValueError(f"Blur size must be >= 1, got {size}")
    return CirculantBlur(psf=np.full((size, size), 1.0 / size ** 2), shape=shape)


def blur_apply(b: CirculantBlur, x: np.ndarray) -> np.ndarray:
    return b.apply(x)


def blur_adjoint(b: CirculantBlur, x: np.ndarray) -> np.ndarray:
    return b.adjoint(x)
