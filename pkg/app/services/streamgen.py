"""
Synthetic sample stream: quadratic-loss centers following a clamped
Gaussian random walk c_{t+1} = clip(c_t + z_{t+1}, -C_max, C_max).
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.errors import DomainError
from app.logger import get_logger
from app.models import LossConstants, RandomWalkConfig
from app.services.losses import QuadraticLoss, as_vector

logger = get_logger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


@dataclass
class WalkState:
    """Current center, step count and the generator that owns the increments."""
    center: np.ndarray
    t: int
    rng: np.random.Generator


def init_walk(cfg: RandomWalkConfig) -> WalkState:
    return WalkState(
        center=np.array(cfg.start(), dtype=np.float64),
        t=0,
        rng=np.random.default_rng(cfg.seed),
    )


def next_center(cfg: RandomWalkConfig, state: WalkState) -> Tuple[np.ndarray, WalkState]:
    """
    Advance the walk one step.

    The generator inside `state` is consumed; a walk state has a single owner.
    """
    z = state.rng.normal(0.0, math.sqrt(cfg.sigma2), size=cfg.dim)
    center = np.clip(state.center + z, -cfg.c_max, cfg.c_max)
    return center, WalkState(center=center, t=state.t + 1, rng=state.rng)


class RandomWalk:
    """Stateful convenience wrapper around init_walk/next_center."""

    def __init__(self, cfg: RandomWalkConfig):
        self.cfg = cfg
        self.state = init_walk(cfg)

    def next_center(self) -> np.ndarray:
        center, self.state = next_center(self.cfg, self.state)
        return center.copy()


def assumption_bound(cfg: RandomWalkConfig) -> float:
    """Euclidean bound C on every center: C_max * sqrt(d)."""
    return cfg.c_max * math.sqrt(cfg.dim)


def _increments(cfg: RandomWalkConfig, seed: int, horizon: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, math.sqrt(cfg.sigma2), size=(horizon, cfg.dim))


def walk_centers(cfg: RandomWalkConfig, horizon: int) -> np.ndarray:
    """Centers c_1..c_T as a (T, d) array; same values as T calls to next_center."""
    return walk_batch(cfg, horizon, [cfg.seed])[0]


def walk_batch(cfg: RandomWalkConfig, horizon: int, seeds: Sequence[int]) -> np.ndarray:
    """
    Centers for several independent walks, shape (R, T, d).

    Row r depends only on seeds[r], so any partition of the seeds gives the
    same rows.
    """
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    z = np.stack([_increments(cfg, seed, horizon) for seed in seeds])
    centers = np.empty_like(z)
    current = np.broadcast_to(np.array(cfg.start(), dtype=np.float64), z[:, 0, :].shape)
    for k in range(horizon):
        current = np.clip(current + z[:, k, :], -cfg.c_max, cfg.c_max)
        centers[:, k, :] = current
    return centers


def losses_from_centers(
    centers: np.ndarray,
    curvature,
    constants: LossConstants,
) -> List[QuadraticLoss]:
    return [QuadraticLoss.certified(c, curvature, constants) for c in centers]


def stream(
    cfg: RandomWalkConfig,
    horizon: int,
    curvature,
    constants: Optional[LossConstants] = None,
) -> List[QuadraticLoss]:
    """
    `horizon` quadratic losses whose centers follow the walk.

    Without explicit constants, (mu, L) are read off the curvature and C is
    the walk's Euclidean bound, so Assumption-2 checks cannot fail.
    """
    q = as_vector(curvature)
    if q.shape[0] == 1 and cfg.dim > 1:
        q = np.full(cfg.dim, q[0])
    as_vector(q, cfg.dim)
    if constants is None:
        constants = LossConstants(mu=float(q.min()), L=float(q.max()), C=assumption_bound(cfg))
    return losses_from_centers(walk_centers(cfg, horizon), q, constants)


def export_csv(centers: np.ndarray, path: Union[str, Path]) -> Path:
    """Write centers as `t,c_1..c_d` with 17 significant digits."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim == 1:
        centers = centers[:, None]
    frame = pd.DataFrame(centers, columns=[f"c_{j}" for j in range(1, centers.shape[1] + 1)])
    frame.insert(0, "t", np.arange(1, centers.shape[0] + 1))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.info("Stream exported", extra={"path": str(path), "horizon": centers.shape[0]})
    return path


def import_csv(path: Union[str, Path]) -> np.ndarray:
    """Read centers written by export_csv (or any tool using the same columns)."""
    frame = pd.read_csv(path, float_precision="round_trip")
    columns = list(frame.columns)
    expected = ["t"] + [f"c_{j}" for j in range(1, len(columns))]
    if columns != expected or len(columns) < 2:
        raise DomainError(f"stream CSV columns {columns} do not match {expected}")
    t = frame["t"].to_numpy()
    if not np.array_equal(t, np.arange(1, len(frame) + 1)):
        raise DomainError("stream CSV rows must be numbered t = 1, 2, ...")
    return frame[expected[1:]].to_numpy(dtype=np.float64)
