from pydantic import BaseModel, ConfigDict, Field

from ris_lab.domain.models.environment import RisPhases, TransmitCovariance


class AoConfig(BaseModel):
    """Alternating optimization: sweep budget, per-element phase grid and stopping tolerance."""

    model_config = ConfigDict(frozen=True)

    max_sweeps: int = Field(default=50, ge=1)
    phase_grid_points: int = Field(default=64, ge=2)
    rate_tolerance: float = Field(default=1e-6, ge=0.0, description="Stop once a sweep gains less (bits)")


class AoResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: RisPhases
    q: TransmitCovariance
    rate: float
    trace: list[float]

    @property
    def sweeps(self) -> int:
        return len(self.trace) - 1


class RandomPhaseResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_rate: float
    best_rate: float
    trials: int
