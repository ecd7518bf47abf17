"""
Run Artifacts - Per-repetition output directories with hash/seed-stamped CSV, JSON and images

Every file written here carries the configuration hash and the seed. Wall-clock time is kept
out of everything except timing.json, so a rerun under the same seed reproduces the rest
byte for byte.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from core.errors import ArtifactError, DivergenceError
from core.models import DomainTag
from transforms.io import write_pgm, write_raw

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def repetition_dir(root: Path, repetition: int) -> Path:
    return Path(root) / f"rep_{repetition:03d}"


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return [_to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.floating):
        return _to_builtin(float(value))
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


class ArtifactWriter:
    """Writes the artifacts of one repetition (or one sweep) into ``directory``"""

    def __init__(self, directory: Path, config_hash: str, seed: str):
        self.directory = Path(directory)
        self.config_hash = config_hash
        self.seed = seed
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactError(f"Cannot create output directory {self.directory}: {e}") from e

    @property
    def header(self) -> str:
        return f"config_hash={self.config_hash} seed={self.seed}"

    def path(self, name: str) -> Path:
        return self.directory / name

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            fh.write(f"# {self.header}\n")
            frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.debug(f"Wrote {path}")
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self.path(name)
        body = dict(_to_builtin(payload))
        body.update({"config_hash": self.config_hash, "seed": self.seed})
        with open(path, "w") as fh:
            json.dump(body, fh, sort_keys=True, indent=2)
            fh.write("\n")
        logger.debug(f"Wrote {path}")
        return path

    def write_array(self, stem: str, array: np.ndarray, domain_tag: DomainTag = DomainTag.PIXEL) -> Path:
        meta = {"config_hash": self.config_hash, "seed": self.seed}
        return write_raw(self.path(f"{stem}.f64"), array, domain_tag, meta)

    def write_image(self, stem: str, image: np.ndarray,
                    domain_tag: DomainTag = DomainTag.PIXEL,
                    value_range=None) -> Dict[str, Path]:
        """Raw float64 (+ sidecar) always; an 8-bit PGM preview for 2-D pixel-domain arrays"""
        written = {"raw": self.write_array(stem, image, domain_tag)}
        if image.ndim == 2 and DomainTag(domain_tag) == DomainTag.PIXEL:
            written["pgm"] = write_pgm(self.path(f"{stem}.pgm"), image, value_range=value_range,
                                       comment=self.header)
        return written

    def write_divergence(self, error: DivergenceError) -> Path:
        logger.error(f"Recording divergence in {self.path('divergence.json')}")
        return self.write_json("divergence.json", error.to_dict())

    def write_timing(self, seconds: float, extra: Optional[Dict[str, float]] = None) -> Path:
        payload = {"wall_time_s": float(seconds)}
        payload.update(extra or {})
        return self.write_json("timing.json", payload)


def read_csv(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Missing artifact: {path}")
    try:
        return pd.read_csv(path, comment="#")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ArtifactError(f"Unreadable CSV {path}: {e}") from e


def read_json(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Missing artifact: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"Unreadable JSON {path}: {e}") from e
