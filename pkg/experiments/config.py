"""
Experiment Configuration - TOML files validated by pydantic models

Validation failures are re-raised as ConfigError with dotted field paths (e.g. sapg.exponent).
"""

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from config import settings
from core.errors import ConfigError
from sapg.runner import SapgConfig
from utils.helpers import config_hash

logger = logging.getLogger(__name__)

ProblemName = Literal[
    "denoise_synthesis_l1",
    "deblur_tv",
    "deblur_wavelet_l1",
    "deblur_tv_unknown_sigma",
    "custom",
]

# Homogeneity class produced by each problem's regulariser
_PROBLEM_ALGORITHMS = {
    "denoise_synthesis_l1": {"alg1", "alg2", "alg3"},
    "deblur_tv": {"alg1"},
    "deblur_wavelet_l1": {"alg1", "alg2", "alg3"},
    "deblur_tv_unknown_sigma": {"alg4"},
}
_CUSTOM_ALGORITHMS = {
    "l1": {"alg1", "alg3"},
    "quadratic": {"alg1", "alg3"},
    "tv": {"alg1"},
    "ridge_l1": {"alg3"},
    "elastic_net": {"alg3"},
    "zero": set(),
}


class InputSettings(BaseModel):
    """Ground truth: a PGM image, or a synthetic generator"""
    image: Optional[str] = None
    size: List[int] = Field(default_factory=lambda: [64, 64])
    true_theta: float = Field(default=1.0, gt=0)
    intensity_scale: float = Field(default=1.0, gt=0)
    phantom_seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_size(self):
        if len(self.size) != 2 or min(self.size) < 2:
            raise ValueError("size must be [height, width] with both >= 2")
        return self


class NoiseSettings(BaseModel):
    kind: Literal["gaussian", "laplace"] = "gaussian"
    snr_db: float = 30.0
    # SNR interval known a priori; used to bound sigma2 when it is estimated
    snr_low_db: float = 15.0
    snr_high_db: float = 45.0

    @model_validator(mode="after")
    def _check_range(self):
        if self.snr_low_db >= self.snr_high_db:
            raise ValueError("snr_low_db must be < snr_high_db")
        return self


class ModelSettings(BaseModel):
    """Operator, transform and likelihood options of the preset problems"""
    blur_size: int = Field(default=9, ge=1)
    wavelet: Literal["orthogonal", "undecimated"] = "orthogonal"
    levels: int = Field(default=4, ge=1)
    block_group: Optional[Literal["level", "subband"]] = None
    likelihood: Literal["gaussian", "laplace"] = "gaussian"
    laplace_smoothing: Optional[float] = Field(default=None, gt=0)
    tv_inner_iters: int = Field(default=25, ge=1)


class CustomProblemSettings(BaseModel):
    regulariser: Literal["l1", "ridge_l1", "quadratic", "elastic_net", "tv", "zero"] = "l1"
    ridge: float = Field(default=0.01, gt=0)
    forward: Literal["identity", "blur"] = "identity"


class MapSettings(BaseModel):
    tol: float = Field(default=1e-5, gt=0)
    max_iters: int = Field(default=1000, ge=1)


class SweepSettings(BaseModel):
    """Explicit theta grid, or ``points`` log-spaced values spanning +/- ``decades`` around a centre"""
    theta: Optional[List[float]] = None
    center: Optional[float] = Field(default=None, gt=0)
    points: int = Field(default=12, ge=1)
    decades: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_grid(self):
        if self.theta is not None and (not self.theta or any(t <= 0 for t in self.theta)):
            raise ValueError("theta grid must be a non-empty list of positive values")
        return self


class DiagnoseSettings(BaseModel):
    """Fixed-theta chain segment re-run from the saved chain state"""
    steps: int = Field(default=500, ge=10)
    max_lag: int = Field(default=100, ge=1)


class ExperimentConfig(BaseModel):
    problem: ProblemName
    algorithm: Literal["alg1", "alg2", "alg3", "alg4"] = "alg1"
    input: InputSettings = Field(default_factory=InputSettings)
    noise: NoiseSettings = Field(default_factory=NoiseSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    custom: CustomProblemSettings = Field(default_factory=CustomProblemSettings)
    sapg: SapgConfig = Field(default_factory=SapgConfig)
    map: MapSettings = Field(default_factory=MapSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    diagnose: DiagnoseSettings = Field(default_factory=DiagnoseSettings)
    output_dir: str = Field(default_factory=lambda: settings.DEFAULT_OUTPUT_DIR)
    repetitions: int = Field(default=1, ge=1)
    master_seed: int = Field(default_factory=lambda: settings.DEFAULT_MASTER_SEED, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _share_algorithm(cls, data):
        if isinstance(data, dict):
            sapg = dict(data.get("sapg") or {})
            sapg["algorithm"] = data.get("algorithm", "alg1")
            data = {**data, "sapg": sapg}
        return data

    @property
    def estimable(self) -> bool:
        """False when the regulariser has no parameter to estimate (map and sweep only)"""
        return not (self.problem == "custom" and not _CUSTOM_ALGORITHMS[self.custom.regulariser])

    @model_validator(mode="after")
    def _check_pairing(self):
        if not self.estimable:
            return self
        if self.problem == "custom":
            allowed = _CUSTOM_ALGORITHMS[self.custom.regulariser]
        else:
            allowed = set(_PROBLEM_ALGORITHMS[self.problem])
            if self.model.block_group is not None:
                allowed = (allowed - {"alg1"}) | {"alg2"}
            else:
                allowed.discard("alg2")
        if self.algorithm not in allowed:
            raise ValueError(
                f"algorithm '{self.algorithm}' does not match the regulariser of problem "
                f"'{self.problem}' (allowed: {sorted(allowed) or 'none'})"
            )
        return self

    def hash(self) -> str:
        """Hash of everything that affects results (the output location does not)"""
        return config_hash(self.model_dump(mode="json", exclude={"output_dir"}))


def _error_path(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def validate_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        errors = [(_error_path(err["loc"]), err["msg"]) for err in e.errors()]
        for path, msg in errors:
            logger.error(f"Config error at {path}: {msg}")
        raise ConfigError(errors) from e


def resolve_config_path(name_or_path: Union[str, Path]) -> Path:
    """A file path, or the name of a shipped preset"""
    path = Path(name_or_path)
    if path.exists():
        return path
    preset = Path(settings.PRESETS_DIR) / f"{path.stem}.toml"
    if preset.exists():
        return preset
    raise ConfigError([("--config", f"no such file or preset: {name_or_path}")])


def load_config(name_or_path: Union[str, Path], overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Parse a TOML experiment file and apply top-level overrides (CLI flags).
    ``sapg.enforce_stability`` falls back to the ENFORCE_KERNEL_STABILITY setting.
    """
    path = resolve_config_path(name_or_path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([(str(path), f"invalid TOML: {e}")]) from e

    raw.setdefault("sapg", {}).setdefault("enforce_stability", settings.ENFORCE_KERNEL_STABILITY)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    config = validate_config(raw)
    logger.info(f"Loaded {path} (problem={config.problem}, algorithm={config.algorithm}, hash={config.hash()})")
    return config
