"""
Utility Functions - Hashing, seed splitting and small conversions shared by the command layer
"""

import hashlib
import json
from typing import Any, Dict, List, Sequence

import numpy as np

HASH_CHARS = 16


def config_hash(config: Dict[str, Any]) -> str:
    """Short sha256 of the canonical JSON form of a configuration mapping"""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:HASH_CHARS]


def repetition_seed(master_seed: int, repetition: int) -> np.random.SeedSequence:
    """
    Seed of repetition r: SeedSequence(master_seed, spawn_key=(r,)).
    Streams are independent across r and do not depend on the worker count.
    """
    if repetition < 0:
        raise ValueError(f"repetition index must be >= 0, got {repetition}")
    return np.random.SeedSequence(master_seed, spawn_key=(repetition,))


def seed_label(seed: np.random.SeedSequence) -> str:
    """Printable identity of a seed sequence, e.g. '1234/0'"""
    key = "/".join(str(k) for k in seed.spawn_key)
    return f"{seed.entropy}/{key}" if key else str(seed.entropy)


def split_seed(seed: np.random.SeedSequence, names: Sequence[str]) -> Dict[str, np.random.SeedSequence]:
    """Named child sequences in a fixed order"""
    return dict(zip(names, seed.spawn(len(names))))


def parse_float_list(text: str) -> List[float]:
    """'0.1,0.2' -> [0.1, 0.2]"""
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError("expected at least one number")
    return [float(v) for v in values]


def log_grid(center: float, decades: float, points: int) -> List[float]:
    """``points`` log-spaced values on [center / 10^decades, center * 10^decades]"""
    if center <= 0 or points < 1:
        raise ValueError(f"invalid grid: center={center}, points={points}")
    if points == 1:
        return [float(center)]
    return [float(v) for v in np.logspace(np.log10(center) - decades, np.log10(center) + decades, points)]
