"""
Per-sample diagonal quadratic losses f(w) = 1/2 * sum_j q_j (w_j - c_j)^2.
Each loss is certified mu-strongly convex, L-smooth and has a bounded minimizer.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.errors import DomainError
from app.models import LossConstants

# relative slack on the ||center|| <= C check; sqrt round-off only
_NORM_SLACK = 1e-12


def as_vector(w, dim: Optional[int] = None) -> np.ndarray:
    """Coerce scalars and sequences to a 1-D float64 array of length dim."""
    vec = np.atleast_1d(np.asarray(w, dtype=np.float64))
    if vec.ndim != 1:
        raise DomainError(f"expected a vector, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise DomainError(f"dimension mismatch: expected {dim}, got {vec.shape[0]}")
    return vec


def _frozen(vec: np.ndarray) -> np.ndarray:
    out = np.array(vec, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """
    Diagonal quadratic loss with minimizer `center` and Hessian diag(`curvature`).

    Construction enforces positive curvature, matching dimensions and
    ||center|| <= bound (the minimizer-norm constant C).
    """
    center: np.ndarray
    curvature: np.ndarray
    bound: float = math.inf

    def __post_init__(self):
        center = as_vector(self.center)
        curvature = as_vector(self.curvature)
        if curvature.shape[0] == 1 and center.shape[0] > 1:
            curvature = np.full(center.shape[0], curvature[0])
        if curvature.shape != center.shape:
            raise DomainError(
                f"curvature has {curvature.shape[0]} entries, center has {center.shape[0]}"
            )
        if np.any(curvature <= 0.0) or not np.all(np.isfinite(curvature)):
            raise DomainError("curvature entries must be finite and strictly positive")
        norm = float(np.linalg.norm(center))
        if norm > self.bound * (1.0 + _NORM_SLACK):
            raise DomainError(f"||center|| = {norm:.6g} exceeds the minimizer bound C = {self.bound:.6g}")
        object.__setattr__(self, "center", _frozen(center))
        object.__setattr__(self, "curvature", _frozen(curvature))

    @classmethod
    def certified(cls, center, curvature, constants: LossConstants) -> "QuadraticLoss":
        """Build a loss and check its curvature against [mu, L] and its center against C."""
        q = as_vector(curvature)
        if np.any(q < constants.mu) or np.any(q > constants.L):
            raise DomainError(f"curvature {q.tolist()} outside [{constants.mu}, {constants.L}]")
        return cls(center=center, curvature=q, bound=constants.C)

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])

    @property
    def hessian_diagonal(self) -> np.ndarray:
        return self.curvature


def loss_value(loss: QuadraticLoss, w) -> float:
    diff = as_vector(w, loss.dim) - loss.center
    return 0.5 * float(np.sum(loss.curvature * diff * diff))


def loss_gradient(loss: QuadraticLoss, w) -> np.ndarray:
    return loss.curvature * (as_vector(w, loss.dim) - loss.center)


def sample_minimizer(loss: QuadraticLoss) -> np.ndarray:
    return loss.center


def loss_constants(loss: QuadraticLoss) -> LossConstants:
    """Tightest (mu, L, C) this loss certifies."""
    norm = float(np.linalg.norm(loss.center))
    bound = loss.bound if math.isfinite(loss.bound) else max(norm, np.finfo(float).tiny)
    return LossConstants(
        mu=float(np.min(loss.curvature)),
        L=float(np.max(loss.curvature)),
        C=bound,
    )
