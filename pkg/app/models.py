"""
Pydantic models for configuration validation and SQLAlchemy ORM models
for the experiment registry.
"""

import math
from datetime import datetime, timezone
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from sqlalchemy import Column, DateTime, Float, Integer, String
from sqlalchemy.orm import declarative_base

from app.errors import ConfigurationError

Base = declarative_base()

_FROZEN = ConfigDict(frozen=True, extra="forbid")


# Enums
class WeightKind(str, Enum):
    UNIFORM = "uniform"
    DISCOUNTED = "discounted"
    CUSTOM = "custom"


class EnvelopeKind(str, Enum):
    UNIFORM_TE = "uniform_te"
    DISCOUNTED_TE = "discounted_te"
    RECURSIVE_TE = "recursive_te"


class FigureId(str, Enum):
    FIG1 = "fig1"
    FIG2 = "fig2"
    FIG3 = "fig3"


class OutputFormat(str, Enum):
    HUMAN = "human"
    CSV = "csv"


class ExitCode(int, Enum):
    OK = 0
    INTERNAL_ERROR = 1
    CONFIG_ERROR = 2
    BOUND_VIOLATION = 3


# Configuration models
class LossConstants(BaseModel):
    """Strong convexity modulus, smoothness constant and minimizer-norm bound."""

    mu: float = Field(..., gt=0.0)
    L: float = Field(..., gt=0.0)
    C: float = Field(..., gt=0.0)

    model_config = _FROZEN

    @model_validator(mode="after")
    def _ordered(self):
        if self.mu > self.L:
            raise ValueError(f"mu={self.mu} must not exceed L={self.L}")
        return self


class SchemeConfig(BaseModel):
    kind: WeightKind = WeightKind.UNIFORM
    gamma: Optional[float] = None

    model_config = _FROZEN

    @model_validator(mode="after")
    def _gamma_matches_kind(self):
        if self.kind == WeightKind.CUSTOM:
            raise ValueError("custom weight schemes are only available through the Python API")
        if self.kind == WeightKind.DISCOUNTED:
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ValueError(f"discounted scheme needs 0 < gamma < 1, got {self.gamma}")
        elif self.gamma is not None:
            raise ValueError(f"gamma={self.gamma} is only valid for the discounted scheme")
        return self


class LossConfig(BaseModel):
    mu: float = Field(..., gt=0.0)
    L: float = Field(..., gt=0.0)
    C: Optional[float] = Field(None, gt=0.0)
    curvature: Optional[List[float]] = None

    model_config = _FROZEN

    @model_validator(mode="after")
    def _curvature_in_range(self):
        if self.mu > self.L:
            raise ValueError(f"mu={self.mu} must not exceed L={self.L}")
        for q in self.curvature or []:
            if not self.mu <= q <= self.L:
                raise ValueError(f"curvature entry {q} outside [{self.mu}, {self.L}]")
        return self


class TrackerConfig(BaseModel):
    """Step size, per-step gradient budget and initial model."""

    eta: float = Field(..., gt=0.0)
    E: int = Field(..., ge=1)
    w0: Optional[List[float]] = None

    model_config = _FROZEN


class RandomWalkConfig(BaseModel):
    """Clamped Gaussian random walk driving the sample centers."""

    c_max: float = Field(..., gt=0.0)
    sigma2: float = Field(..., gt=0.0)
    c0: Optional[List[float]] = None
    dim: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)

    model_config = _FROZEN

    @model_validator(mode="after")
    def _start_inside_box(self):
        if self.c0 is not None:
            if len(self.c0) != self.dim:
                raise ValueError(f"c0 has {len(self.c0)} entries, expected dim={self.dim}")
            if max(abs(c) for c in self.c0) > self.c_max:
                raise ValueError(f"c0 lies outside [-{self.c_max}, {self.c_max}]")
        return self

    def start(self) -> List[float]:
        return list(self.c0) if self.c0 is not None else [0.0] * self.dim

    def with_seed(self, seed: int) -> "RandomWalkConfig":
        return self.model_copy(update={"seed": seed})


class ExperimentConfig(BaseModel):
    """A complete Monte-Carlo experiment: one series per entry of E_values."""

    name: str = "experiment"
    scheme: SchemeConfig = SchemeConfig()
    loss: LossConfig
    tracker: TrackerConfig
    walk: RandomWalkConfig
    horizon: int = Field(1000, ge=1)
    num_runs: int = Field(1000, ge=1)
    E_values: List[int] = Field(default_factory=list)
    record_every: int = Field(1, ge=1)
    window_fraction: float = Field(0.2, gt=0.0, le=1.0)
    epsilon: Optional[float] = Field(None, gt=0.0)
    # bound-check fixture: values below 1 corrupt the envelope on purpose
    envelope_scale: float = Field(1.0, gt=0.0)

    model_config = _FROZEN

    @field_validator("E_values")
    @classmethod
    def _budgets_positive(cls, values):
        if any(e < 1 for e in values):
            raise ValueError("every entry of E_values must be >= 1")
        return values

    @model_validator(mode="after")
    def _dimensions_agree(self):
        dim = self.walk.dim
        if self.tracker.w0 is not None and len(self.tracker.w0) not in (1, dim):
            raise ValueError(f"tracker.w0 has {len(self.tracker.w0)} entries, expected {dim}")
        if self.loss.curvature is not None and len(self.loss.curvature) not in (1, dim):
            raise ValueError(f"loss.curvature has {len(self.loss.curvature)} entries, expected {dim}")
        return self

    @property
    def budgets(self) -> List[int]:
        return list(self.E_values) if self.E_values else [self.tracker.E]

    @property
    def dim(self) -> int:
        return self.walk.dim

    def curvature(self) -> List[float]:
        if self.loss.curvature is None:
            return [self.loss.mu] * self.dim
        if len(self.loss.curvature) == 1:
            return list(self.loss.curvature) * self.dim
        return list(self.loss.curvature)

    def initial_model(self) -> List[float]:
        if self.tracker.w0 is None:
            return [0.0] * self.dim
        if len(self.tracker.w0) == 1:
            return list(self.tracker.w0) * self.dim
        return list(self.tracker.w0)

    def constants(self) -> LossConstants:
        """(mu, L, C) with C defaulting to the walk's Euclidean bound."""
        c_bound = self.loss.C if self.loss.C is not None else self.walk.c_max * math.sqrt(self.dim)
        return LossConstants(mu=self.loss.mu, L=self.loss.L, C=c_bound)

    def check_admissible(self) -> None:
        """Raise ConfigurationError when the step size breaks the contraction range."""
        limit = 2.0 / (self.loss.mu + self.loss.L)
        if not 0.0 < self.tracker.eta <= limit:
            raise ConfigurationError(
                f"tracker.eta={self.tracker.eta:g} outside admissible interval (0, {limit:g}]",
                key="tracker.eta",
            )


class TheoryParams(BaseModel):
    """Inputs to the closed-form constants: (mu, L, C, eta, E, gamma)."""

    mu: float = Field(..., gt=0.0)
    L: float = Field(..., gt=0.0)
    C: float = Field(..., gt=0.0)
    eta: float = Field(..., gt=0.0)
    E: int = Field(1, ge=1)
    gamma: Optional[float] = Field(None, gt=0.0, lt=1.0)

    model_config = _FROZEN

    @model_validator(mode="after")
    def _contraction_range(self):
        if self.mu > self.L:
            raise ValueError(f"mu={self.mu} must not exceed L={self.L}")
        limit = 2.0 / (self.mu + self.L)
        if self.eta > limit:
            raise ValueError(f"eta={self.eta:g} outside admissible interval (0, {limit:g}]")
        return self

    @property
    def constants(self) -> LossConstants:
        return LossConstants(mu=self.mu, L=self.L, C=self.C)

    def with_budget(self, E: int) -> "TheoryParams":
        return self.model_copy(update={"E": E})


# SQLAlchemy ORM Models
class ExperimentRecord(Base):
    __tablename__ = "experiment_records"

    id = Column(Integer, primary_key=True, index=True)
    experiment_id = Column(String, index=True, nullable=False)
    name = Column(String, nullable=False)
    scheme = Column(String, nullable=False)
    gamma = Column(Float)
    E = Column(Integer, nullable=False)
    eta = Column(Float, nullable=False)
    mu = Column(Float, nullable=False)
    L = Column(Float, nullable=False)
    horizon = Column(Integer, nullable=False)
    num_runs = Column(Integer, nullable=False)
    base_seed = Column(String, nullable=False)
    empirical_ate = Column(Float)
    final_rms_te = Column(Float)
    final_max_te = Column(Float)
    violations = Column(Integer, nullable=False, default=0)
    csv_path = Column(String)
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
