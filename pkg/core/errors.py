"""
Errors - Exception hierarchy shared by every package
Each error carries the numbers needed to diagnose it, not just a message
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


class SapgError(Exception):
    """Base class for all estimation errors"""


class DimensionError(SapgError):
    """Raised when an array does not have the dimension a model expects"""

    def __init__(self, field: str, expected, actual):
        self.field = field
        self.expected = expected
        self.actual = actual
        super().__init__(f"Dimension mismatch in '{field}': expected {expected}, got {actual}")


class ProxError(SapgError):
    """Proximal operator failed (non-finite output or inner solver residual too large)"""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (inner residual={residual:.3e}, iterations={iterations})")


class DivergenceError(SapgError):
    """A Markov chain produced a non-finite state"""

    def __init__(self,
                 gamma: float,
                 lam: float,
                 theta: Sequence[float],
                 step: int,
                 chain: str = "posterior"):
        self.gamma = float(gamma)
        self.lam = float(lam)
        self.theta = [float(t) for t in np.atleast_1d(theta)]
        self.step = int(step)
        self.chain = chain
        super().__init__(
            f"{chain} chain diverged at step {step} "
            f"(gamma={self.gamma:.3e}, lambda={self.lam:.3e}, theta={self.theta})"
        )

    def to_dict(self) -> Dict:
        return {
            "chain": self.chain,
            "gamma": self.gamma,
            "lambda": self.lam,
            "theta": self.theta,
            "step": self.step,
        }


class HomogeneityMismatchError(SapgError):
    """The selected algorithm cannot handle the regulariser's homogeneity class"""


class ConfigError(SapgError):
    """Configuration validation failure, one (field path, message) pair per problem"""

    def __init__(self, errors: List[Tuple[str, str]]):
        self.errors = list(errors)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.errors)
        super().__init__(f"Invalid configuration: {lines}")


class ArtifactError(SapgError):
    """A run artifact is missing or unreadable"""


class OracleError(SapgError):
    """Base class for reference-computation failures"""


class NonDecayingIntegrandError(OracleError):
    """Quadrature mass keeps growing at the largest radius (improper density)"""

    def __init__(self, radius: float, tail_fraction: float):
        self.radius = radius
        self.tail_fraction = tail_fraction
        super().__init__(
            f"Integrand does not decay: tail fraction {tail_fraction:.3e} at radius {radius:g}"
        )


class OracleConvergenceError(OracleError):
    """Brute-force reference did not converge"""

    def __init__(self, message: str, residual: Optional[float] = None):
        self.residual = residual
        suffix = f" (residual={residual:.3e})" if residual is not None else ""
        super().__init__(message + suffix)
