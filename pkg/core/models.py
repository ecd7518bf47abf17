"""
Core Models - Domain types shared by the sampler, the SAPG loops and the MAP solver
A PosteriorModel bundles p(x|y,theta) ~ exp(-f_y(x) - theta^T g(x)) with its theta domain
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import DimensionError, ProxError

logger = logging.getLogger(__name__)


class DomainTag(str, Enum):
    """Whether an array lives in pixel space or in a transform (coefficient) space"""
    PIXEL = "pixel"
    COEFFICIENT = "coefficient"


@dataclass(frozen=True, eq=False)
class ImageVector:
    """Real-valued array with its shape and domain tag; always finite"""
    data: np.ndarray
    domain_tag: DomainTag = DomainTag.PIXEL

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise ValueError("ImageVector entries must be finite")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def flat(self) -> np.ndarray:
        return self.data.ravel()

    @classmethod
    def from_flat(cls, values: Sequence[float], shape: Tuple[int, ...],
                  domain_tag: DomainTag = DomainTag.PIXEL) -> "ImageVector":
        values = np.asarray(values, dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise DimensionError("data", int(np.prod(shape)), values.size)
        return cls(values.reshape(shape), domain_tag)


# Homogeneity descriptors

@dataclass(frozen=True)
class Homogeneous:
    """g(t x) = t^alpha g(x) for all t > 0"""
    alpha: float

    def __post_init__(self):
        if self.alpha == 0:
            raise ValueError("Homogeneity degree alpha must be nonzero")


@dataclass(frozen=True, eq=False)
class Block:
    """Index set A_i of a separably homogeneous regulariser"""
    indices: np.ndarray
    alpha: float = 1.0
    label: str = ""

    @property
    def size(self) -> int:
        return int(len(self.indices))


@dataclass(frozen=True)
class SeparablyHomogeneous:
    """g_i acts on the block A_i only and is alpha_i-homogeneous there"""
    blocks: Tuple[Block, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        for block in self.blocks:
            if block.alpha <= 0:
                raise ValueError(f"Block '{block.label}' must have alpha > 0, got {block.alpha}")

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks], dtype=float)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([b.alpha for b in self.blocks], dtype=float)

    def validate_partition(self, dim: int):
        """Blocks must be disjoint and cover 0..dim-1"""
        if int(self.sizes.sum()) != dim:
            raise DimensionError("blocks", dim, int(self.sizes.sum()))
        seen = np.zeros(dim, dtype=bool)
        for block in self.blocks:
            if np.any(seen[block.indices]):
                raise DimensionError("blocks", "disjoint index sets", f"overlap in block '{block.label}'")
            seen[block.indices] = True


@dataclass(frozen=True)
class General:
    """No homogeneity structure: log Z must be handled with a prior chain"""


Homogeneity = Union[Homogeneous, SeparablyHomogeneous, General]


@dataclass(frozen=True)
class LikelihoodSpec:
    """Convex, L-smooth data-fidelity term f_y"""
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    preconditioner: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "likelihood"

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise ValueError(f"Likelihood Lipschitz constant must be > 0, got {self.lipschitz}")

    def drift(self, x: np.ndarray) -> np.ndarray:
        """Gradient with the optional preconditioner applied"""
        grad = self.grad(x)
        if self.preconditioner is not None:
            grad = self.preconditioner(grad)
        return grad


def zero_likelihood(lipschitz: float = 1e-12) -> LikelihoodSpec:
    """f_y = 0 (prior-only models)"""
    return LikelihoodSpec(
        eval=lambda x: 0.0,
        grad=lambda x: np.zeros_like(x),
        lipschitz=lipschitz,
        name="zero",
    )


ProxFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class RegulariserSpec:
    """
    Regulariser theta^T g(x) given by its statistics vector g and the composite prox.

    ``prox(x, theta, lam, cache=None)`` returns prox^lam_{theta^T g}(x) for the non-smooth part.
    ``smooth_grad(x, theta)``, when set, is the gradient of a differentiable part that the
    Langevin kernel treats as a plain gradient term instead of going through the prox.
    ``smooth_lipschitz(theta)`` is the Lipschitz constant of ``smooth_grad(., theta)``.
    """
    stat: Callable[[np.ndarray], np.ndarray]
    prox: Optional[ProxFn]
    homogeneity: Homogeneity
    effective_dim: int
    n_params: int = 1
    smooth_grad: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "regulariser"
    uses_cache: bool = False
    smooth_lipschitz: Optional[Callable[[np.ndarray], float]] = None

    def statistics(self, x: np.ndarray) -> np.ndarray:
        values = np.atleast_1d(np.asarray(self.stat(x), dtype=float))
        if values.shape != (self.n_params,):
            raise DimensionError("regulariser.stat", (self.n_params,), values.shape)
        return values

    def value(self, x: np.ndarray, theta: np.ndarray) -> float:
        return float(np.dot(np.atleast_1d(theta), self.statistics(x)))

    def smooth_lipschitz_at(self, theta) -> float:
        """Gradient Lipschitz constant of the smooth part at theta; zero when there is none"""
        if self.smooth_grad is None:
            return 0.0
        if self.smooth_lipschitz is None:
            raise ValueError(f"Regulariser '{self.name}' has a smooth part but no smooth_lipschitz")
        return float(self.smooth_lipschitz(np.atleast_1d(np.asarray(theta, dtype=float))))


@dataclass(frozen=True, eq=False)
class ThetaDomain:
    """Box Theta = [lower, upper] inside (0, inf)^{d_theta}"""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise DimensionError("theta_domain.upper", lower.shape, upper.shape)
        if np.any(lower <= 0):
            raise ValueError(f"Theta lower bounds must be > 0, got {lower}")
        if np.any(upper < lower):
            raise ValueError(f"Theta upper bounds must be >= lower bounds, got {lower} and {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def size(self) -> int:
        return int(self.lower.size)

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.atleast_1d(theta)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


@dataclass(frozen=True, eq=False)
class PosteriorModel:
    """Likelihood + regulariser + theta domain on an array of shape ``shape``"""
    likelihood: LikelihoodSpec
    regulariser: RegulariserSpec
    theta_domain: ThetaDomain
    shape: Tuple[int, ...]
    domain_tag: DomainTag = DomainTag.PIXEL
    name: str = "model"
    check_dims: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.theta_domain.size != self.regulariser.n_params:
            raise DimensionError("theta_domain", self.regulariser.n_params, self.theta_domain.size)
        if isinstance(self.regulariser.homogeneity, SeparablyHomogeneous):
            self.regulariser.homogeneity.validate_partition(self.dim)
        if self.check_dims:
            self._check_dimensions()

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def _check_dimensions(self):
        origin = np.zeros(self.shape)
        grad = self.likelihood.grad(origin)
        if np.shape(grad) != self.shape:
            raise DimensionError("likelihood.grad", self.shape, np.shape(grad))
        self.regulariser.statistics(origin)
        if self.regulariser.prox is not None:
            point = self.regulariser.prox(origin, self.theta_domain.lower, 1.0)
            if np.shape(point) != self.shape:
                raise DimensionError("regulariser.prox", self.shape, np.shape(point))

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.regulariser.n_params,):
            raise DimensionError("theta", (self.regulariser.n_params,), theta.shape)
        return theta

    def check_x(self, x: np.ndarray) -> np.ndarray:
        if np.shape(x) != self.shape:
            raise DimensionError("x", self.shape, np.shape(x))
        return x


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, ImageVector) else np.asarray(x, dtype=float)


def eval_log_posterior_unnorm(model: PosteriorModel, x, theta) -> float:
    """-f_y(x) - theta^T g(x)"""
    x = model.check_x(_as_array(x))
    theta = model.check_theta(theta)
    return -float(model.likelihood.eval(x)) - model.regulariser.value(x, theta)


def moreau_grad(model: PosteriorModel, x, theta, lam: float, cache=None) -> np.ndarray:
    """
    Gradient of the lam-Moreau envelope of theta^T g: (x - prox^lam_{theta^T g}(x)) / lam.

    Regularisers without a prox contribute zero here (their smooth part is a gradient term).
    """
    if not lam > 0:
        raise ValueError(f"Moreau smoothing lambda must be > 0, got {lam}")
    x = model.check_x(_as_array(x))
    theta = model.check_theta(theta)
    reg = model.regulariser
    if reg.prox is None:
        return np.zeros_like(x)

    if reg.uses_cache:
        point = reg.prox(x, theta, lam, cache=cache)
    else:
        point = reg.prox(x, theta, lam)
    if not np.all(np.isfinite(point)):
        residual = getattr(cache, "last_residual", float("nan"))
        raise ProxError(f"Prox of '{reg.name}' returned non-finite values", residual)
    return (x - point) / lam
