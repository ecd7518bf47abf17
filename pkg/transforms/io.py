"""
Image I/O - Binary PGM for display-range images, raw float64 + JSON sidecar for everything else
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from core.errors import ArtifactError
from core.models import DomainTag

logger = logging.getLogger(__name__)


def write_pgm(path: Path,
              image: np.ndarray,
              bit_depth: int = 8,
              value_range: Optional[Tuple[float, float]] = None,
              comment: Optional[str] = None) -> Path:
    """
    Quantise ``image`` onto [0, maxval] and write it as P5.

    ``value_range`` defaults to the image's own min/max; a flat image maps to 0.
    """
    if image.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {image.shape}")
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    maxval = 255 if bit_depth == 8 else 65535
    lo, hi = value_range if value_range is not None else (float(image.min()), float(image.max()))
    span = hi - lo
    scaled = np.zeros(image.shape) if span <= 0 else (np.clip(image, lo, hi) - lo) / span
    pixels = np.rint(scaled * maxval).astype(">u2" if bit_depth == 16 else np.uint8)

    path = Path(path)
    header = "P5\n"
    if comment:
        header += "".join(f"# {line}\n" for line in comment.splitlines())
    header += f"{image.shape[1]} {image.shape[0]}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def _pgm_tokens(data: bytes, count: int) -> Tuple[list, int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments; return tokens and data offset"""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ArtifactError("Truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pgm(path: Path) -> np.ndarray:
    """Read a P5 (binary) or P2 (plain) PGM as float64 grey levels in [0, maxval]"""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Image not found: {path}")
    data = path.read_bytes()
    try:
        (magic, width, height, maxval), offset = _pgm_tokens(data, 4)
        width, height, maxval = int(width), int(height), int(maxval)
    except (ValueError, UnicodeDecodeError) as e:
        raise ArtifactError(f"Malformed PGM header in {path}: {e}") from e

    if magic == "P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        count = width * height
        pixels = np.frombuffer(data, dtype=dtype, count=count, offset=offset) \
            if len(data) - offset >= count * np.dtype(dtype).itemsize else None
    elif magic == "P2":
        values = data[offset - 1:].split()
        pixels = np.array([int(v) for v in values[:width * height]]) if len(values) >= width * height else None
    else:
        raise ArtifactError(f"Unsupported PGM magic '{magic}' in {path}")
    if pixels is None:
        raise ArtifactError(f"Truncated PGM pixel data in {path}")
    return pixels.reshape(height, width).astype(np.float64)


def write_raw(path: Path,
              array: np.ndarray,
              domain_tag: DomainTag = DomainTag.PIXEL,
              metadata: Optional[Dict] = None) -> Path:
    """Little-endian float64 dump at ``path`` with ``path.json`` describing it"""
    path = Path(path)
    array = np.ascontiguousarray(array, dtype="<f8")
    path.write_bytes(array.tobytes())
    sidecar = {"shape": list(array.shape), "domain_tag": DomainTag(domain_tag).value}
    sidecar.update(metadata or {})
    with open(path.with_name(path.name + ".json"), "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
    return path


def read_raw(path: Path) -> Tuple[np.ndarray, Dict]:
    path = Path(path)
    sidecar_path = path.with_name(path.name + ".json")
    if not path.exists() or not sidecar_path.exists():
        raise ArtifactError(f"Raw array or sidecar missing for {path}")
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    shape = tuple(meta["shape"])
    array = np.frombuffer(path.read_bytes(), dtype="<f8")
    if array.size != int(np.prod(shape)):
        raise ArtifactError(f"{path}: {array.size} values for shape {shape}")
    return array.reshape(shape).astype(np.float64), meta
