"""Pydantic validation models for run configuration and results."""

import hashlib
import json
import math
from datetime import datetime
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_ALPHA = 0.99
DEFAULT_EVENTS = 10_000
DEFAULT_PHI_STEPS = 36
DEFAULT_HWP_DEG = 45.0


class Mode(str, Enum):
    """How the EOM is driven during a run."""

    DELAYED_CHOICE = "delayed_choice"
    CLOSED = "closed"
    OPEN = "open"
    BLOCKED_ARM0 = "blocked_arm0"
    BLOCKED_ARM1 = "blocked_arm1"

    @property
    def blocked_arm(self) -> int | None:
        """Index of the blocked interferometer arm, if any."""
        if self is Mode.BLOCKED_ARM0:
            return 0
        if self is Mode.BLOCKED_ARM1:
            return 1
        return None


class Configuration(str, Enum):
    """Interferometer configuration seen by one event (EOM off = open)."""

    OPEN = "open"
    CLOSED = "closed"

    @classmethod
    def from_choice(cls, a_n: int) -> "Configuration":
        return cls.CLOSED if a_n else cls.OPEN


class EomSchedule(str, Enum):
    """Sequence of EOM choices in delayed-choice mode."""

    RANDOM = "random"
    ALTERNATING = "alternating"


def phase_grid(start: float, end: float, steps: int) -> list[float]:
    """``steps`` phases from ``start`` (inclusive) to ``end`` (exclusive)."""
    if steps < 1:
        raise ValueError("phi grid needs at least one point")
    width = (end - start) / steps
    return [start + i * width for i in range(steps)]


class ExperimentConfig(BaseModel):
    """One run: reflectivity, mode, phase grid and event budget."""

    model_config = ConfigDict(frozen=True)

    r: float = Field(0.5, ge=0.0, le=0.5, description="Effective reflectivity R")
    mode: Mode = Field(Mode.DELAYED_CHOICE, description="EOM drive mode")
    phi_grid: tuple[float, ...] = Field(
        default_factory=lambda: tuple(phase_grid(0.0, 2.0 * math.pi, DEFAULT_PHI_STEPS)),
        description="Phase shifts (radians)",
    )
    events: int = Field(DEFAULT_EVENTS, ge=1, description="Events N per phase point")
    seed: int = Field(20080530, ge=0, lt=2**64, description="Master seed")
    alpha: float = Field(DEFAULT_ALPHA, gt=0.0, lt=1.0, description="DLM learning parameter")
    hwp_angle: float = Field(
        math.radians(DEFAULT_HWP_DEG), description="HWP fast-axis angle (radians)"
    )
    warmup_fraction: float = Field(0.0, ge=0.0, lt=1.0, description="Discarded warm-up share")
    eom_schedule: EomSchedule = Field(EomSchedule.RANDOM, description="EOM choice sequence")
    fresh_state_per_point: bool = Field(True, description="Rebuild the network per point")

    @field_validator("phi_grid")
    @classmethod
    def validate_phi_grid(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        """Grid must be non-empty and finite."""
        if not v:
            raise ValueError("phi_grid must not be empty")
        if not all(math.isfinite(p) for p in v):
            raise ValueError("phi_grid values must be finite")
        return v

    @field_validator("hwp_angle")
    @classmethod
    def validate_hwp_angle(cls, v: float) -> float:
        """Reject NaN and infinities."""
        if not math.isfinite(v):
            raise ValueError("hwp_angle must be finite")
        return v

    def fingerprint(self) -> str:
        """Deterministic 12-hex digest of the configuration."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.blake2b(payload.encode("utf-8"), digest_size=6).hexdigest()


class CountRow(BaseModel):
    """Counts of one (R, mode, configuration, Phi) cell."""

    model_config = ConfigDict(frozen=True)

    run_id: str = Field(..., min_length=1)
    r: float = Field(..., ge=0.0, le=0.5)
    mode: Mode
    config: Configuration
    phi_rad: float
    n: int = Field(..., ge=0)
    n_d0: int = Field(..., ge=0)
    n_d1: int = Field(..., ge=0)
    n_d0_path0: int = Field(..., ge=0)
    n_d0_path1: int = Field(..., ge=0)
    n_d1_path0: int = Field(..., ge=0)
    n_d1_path1: int = Field(..., ge=0)
    seed: int = Field(..., ge=0)

    @model_validator(mode="after")
    def validate_sums(self) -> "CountRow":
        """Detector totals and path splits must add up."""
        if self.n_d0 + self.n_d1 != self.n:
            raise ValueError(f"n_d0 + n_d1 = {self.n_d0 + self.n_d1} != n = {self.n}")
        if self.n_d0_path0 + self.n_d0_path1 != self.n_d0:
            raise ValueError("path split at D0 does not add up to n_d0")
        if self.n_d1_path0 + self.n_d1_path1 != self.n_d1:
            raise ValueError("path split at D1 does not add up to n_d1")
        return self

    @property
    def intensity0(self) -> float:
        """Normalized intensity N0/N."""
        return self.n_d0 / self.n if self.n else 0.0


COUNT_COLUMNS = list(CountRow.model_fields)


class FringeFit(BaseModel):
    """Least-squares fit of c * (1 - V cos(Phi - phi0)) to N0/N."""

    model_config = ConfigDict(frozen=True)

    v_hat: float = Field(..., ge=0.0, description="Fitted visibility")
    v_err: float = Field(..., ge=0.0, description="Standard error of v_hat")
    phase_offset: float = Field(..., description="phi0 in [0, 2 pi)")
    baseline: float = Field(..., description="c")
    residual_rms: float = Field(..., ge=0.0)
    v_maxmin: float = Field(..., ge=0.0, description="(Imax - Imin)/(Imax + Imin) cross-check")
    n_points: int = Field(..., ge=3)

    @property
    def v_reported(self) -> float:
        """Visibility clamped to [0, 1] for reporting."""
        return min(self.v_hat, 1.0)


class DualityReport(BaseModel):
    """V, D and V^2 + D^2 at one grid point."""

    model_config = ConfigDict(frozen=True)

    r: float = Field(..., ge=0.0, le=0.5)
    voltage: float | None = None
    v_hat: float = Field(..., ge=0.0)
    v_err: float = Field(..., ge=0.0)
    d_hat: float = Field(..., ge=0.0, le=1.0)
    d_err: float = Field(..., ge=0.0)
    v2: float
    d2: float
    v2_plus_d2: float


SUMMARY_COLUMNS = list(DualityReport.model_fields)


class GammaMeta(BaseModel):
    """Metadata of a per-event dataset slice."""

    model_config = ConfigDict(frozen=True)

    r: float
    phi: float
    events: int
    seed: int
    mode: Mode


class RunManifest(BaseModel):
    """Written before any data file of a CLI run; data files carry its run_id."""

    model_config = ConfigDict(frozen=False, validate_assignment=True)

    run_id: str
    command: str
    tool_version: str
    seed: int
    generator: str
    config: dict
    started_at: datetime
    finished_at: datetime | None = None
    files: dict[str, str] = Field(default_factory=dict)
