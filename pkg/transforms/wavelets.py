"""
Haar Wavelets - Orthogonal (decimated) and undecimated 2-D Haar transforms

Orthogonal coefficients are stored in the Mallat layout, same shape as the image.
Undecimated coefficients are stored as a (1 + 3*levels, H, W) stack:
index 0 is the approximation, then (lh, hl, hh) for level 1, level 2, ...
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from core.errors import DimensionError
from core.models import Block

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
ORIENTATIONS = ("lh", "hl", "hh")


class WaveletKind(str, Enum):
    ORTHOGONAL = "orthogonal"
    UNDECIMATED = "undecimated"


@dataclass(frozen=True)
class WaveletBasis:
    """2-D Haar analysis/synthesis pair for images of a fixed shape"""
    kind: WaveletKind
    levels: int
    shape: Tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "kind", WaveletKind(self.kind))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.shape) != 2:
            raise DimensionError("shape", "2-D image shape", self.shape)
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.kind == WaveletKind.ORTHOGONAL:
            step = 2 ** self.levels
            if self.shape[0] % step or self.shape[1] % step:
                raise DimensionError(
                    "shape", f"dimensions divisible by 2^{self.levels}={step}", self.shape
                )

    @property
    def coeff_shape(self) -> Tuple[int, ...]:
        if self.kind == WaveletKind.ORTHOGONAL:
            return self.shape
        return (1 + 3 * self.levels,) + self.shape

    @property
    def redundancy(self) -> int:
        return 1 if self.kind == WaveletKind.ORTHOGONAL else 1 + 3 * self.levels

    def analysis(self, image: np.ndarray) -> np.ndarray:
        if image.shape != self.shape:
            raise DimensionError("image", self.shape, image.shape)
        if self.kind == WaveletKind.ORTHOGONAL:
            return _orthogonal_analysis(image, self.levels)
        return _undecimated_analysis(image, self.levels)

    def synthesis(self, coeffs: np.ndarray) -> np.ndarray:
        if coeffs.shape != self.coeff_shape:
            raise DimensionError("coeffs", self.coeff_shape, coeffs.shape)
        if self.kind == WaveletKind.ORTHOGONAL:
            return _orthogonal_synthesis(coeffs, self.levels)
        return _undecimated_synthesis(coeffs, self.levels)

    def block_index(self) -> Tuple[np.ndarray, List[Tuple[int, str]]]:
        """
        Label every coefficient with a subband id.

        Returns an int array of ``coeff_shape`` and the list of (level, orientation) per id;
        level 0 with orientation "approx" is the coarse approximation.
        """
        labels: List[Tuple[int, str]] = [(0, "approx")]
        index = np.zeros(self.coeff_shape, dtype=int)

        if self.kind == WaveletKind.UNDECIMATED:
            for band in range(1, 1 + 3 * self.levels):
                level, orient = divmod(band - 1, 3)
                labels.append((level + 1, ORIENTATIONS[orient]))
                index[band] = band
            return index, labels

        H, W = self.shape
        for level in range(1, self.levels + 1):
            h, w = H >> level, W >> level
            for orient, (rows, cols) in zip(
                ORIENTATIONS,
                [(slice(0, h), slice(w, 2 * w)),
                 (slice(h, 2 * h), slice(0, w)),
                 (slice(h, 2 * h), slice(w, 2 * w))],
            ):
                labels.append((level, orient))
                index[rows, cols] = len(labels) - 1
        return index, labels

    def blocks(self, group_by: str = "level", alpha: float = 1.0) -> List[Block]:
        """
        Flat index blocks for a separably homogeneous regulariser.

        ``group_by="level"`` gives the approximation plus one block per level;
        ``group_by="subband"`` gives one block per (level, orientation).
        """
        if group_by not in ("level", "subband"):
            raise ValueError(f"group_by must be 'level' or 'subband', got '{group_by}'")
        index, labels = self.block_index()
        flat = index.ravel()

        groups: Dict[str, List[int]] = {}
        for band, (level, orient) in enumerate(labels):
            key = "approx" if level == 0 else (
                f"level{level}" if group_by == "level" else f"level{level}-{orient}"
            )
            groups.setdefault(key, []).append(band)

        blocks = []
        for key, bands in groups.items():
            indices = np.flatnonzero(np.isin(flat, bands))
            blocks.append(Block(indices=indices, alpha=alpha, label=key))
        return blocks


def haar_analysis(basis: WaveletBasis, image: np.ndarray) -> np.ndarray:
    return basis.analysis(image)


def haar_synthesis(basis: WaveletBasis, coeffs: np.ndarray) -> np.ndarray:
    return basis.synthesis(coeffs)


# Orthogonal (Mallat) transform

def _split(x: np.ndarray, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    even = np.take(x, np.arange(0, x.shape[axis], 2), axis=axis)
    odd = np.take(x, np.arange(1, x.shape[axis], 2), axis=axis)
    return (even + odd) / SQRT2, (even - odd) / SQRT2


def _merge(low: np.ndarray, high: np.ndarray, axis: int) -> np.ndarray:
    shape = list(low.shape)
    shape[axis] *= 2
    out = np.empty(shape)
    even = [slice(None)] * low.ndim
    odd = [slice(None)] * low.ndim
    even[axis] = slice(0, None, 2)
    odd[axis] = slice(1, None, 2)
    out[tuple(even)] = (low + high) / SQRT2
    out[tuple(odd)] = (low - high) / SQRT2
    return out


def _orthogonal_analysis(image: np.ndarray, levels: int) -> np.ndarray:
    coeffs = np.array(image, dtype=np.float64, copy=True)
    H, W = image.shape
    for level in range(levels):
        h, w = H >> level, W >> level
        block = coeffs[:h, :w]
        lo, hi = _split(block, axis=0)
        ll, lh = _split(lo, axis=1)
        hl, hh = _split(hi, axis=1)
        coeffs[:h, :w] = np.block([[ll, lh], [hl, hh]])
    return coeffs


def _orthogonal_synthesis(coeffs: np.ndarray, levels: int) -> np.ndarray:
    image = np.array(coeffs, dtype=np.float64, copy=True)
    H, W = coeffs.shape
    for level in reversed(range(levels)):
        h, w = H >> (level + 1), W >> (level + 1)
        ll, lh = image[:h, :w], image[:h, w:2 * w]
        hl, hh = image[h:2 * h, :w], image[h:2 * h, w:2 * w]
        lo = _merge(ll, lh, axis=1)
        hi = _merge(hl, hh, axis=1)
        image[:2 * h, :2 * w] = _merge(lo, hi, axis=0)
    return image


# Undecimated (a trous) Haar tight frame with filters [1, 1]/2 and [1, -1]/2

def _low(x, shift, axis):
    return 0.5 * (x + np.roll(x, -shift, axis=axis))


def _high(x, shift, axis):
    return 0.5 * (x - np.roll(x, -shift, axis=axis))


def _low_t(x, shift, axis):
    return 0.5 * (x + np.roll(x, shift, axis=axis))


def _high_t(x, shift, axis):
    return 0.5 * (x - np.roll(x, shift, axis=axis))


def _undecimated_analysis(image: np.ndarray, levels: int) -> np.ndarray:
    out = np.empty((1 + 3 * levels,) + image.shape)
    approx = np.asarray(image, dtype=np.float64)
    for level in range(levels):
        shift = 2 ** level
        lo, hi = _low(approx, shift, 0), _high(approx, shift, 0)
        base = 1 + 3 * level
        out[base] = _high(lo, shift, 1)
        out[base + 1] = _low(hi, shift, 1)
        out[base + 2] = _high(hi, shift, 1)
        approx = _low(lo, shift, 1)
    out[0] = approx
    return out


def _undecimated_synthesis(coeffs: np.ndarray, levels: int) -> np.ndarray:
    approx = coeffs[0]
    for level in reversed(range(levels)):
        shift = 2 ** level
        base = 1 + 3 * level
        lo = _low_t(approx, shift, 1) + _high_t(coeffs[base], shift, 1)
        hi = _low_t(coeffs[base + 1], shift, 1) + _high_t(coeffs[base + 2], shift, 1)
        approx = _low_t(lo, shift, 0) + _high_t(hi, shift, 0)
    return approx
