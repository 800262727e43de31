from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ris_lab.domain.models.geometry import Point3
from ris_lab.utils.linalg import complex_to_realvec, is_hermitian
from ris_lab.utils.units import dbm_to_watts

PSD_TOL = 1e-9
UNIT_MODULUS_TOL = 1e-9

# θ (length N) -> composite channel (K × M); the true channel or an IEN prediction
ChannelOracle = Callable[[np.ndarray], np.ndarray]


class EnvConfig(BaseModel):
    """Power budget and noise level, given in dBm."""

    model_config = ConfigDict(frozen=True)

    power_budget_dbm: float = Field(default=20.0, description="BS transmit power p")
    noise_power_dbm: float = Field(default=-80.0, description="UE noise power sigma^2")
    state_location_scaling: Literal["raw", "minmax"] = Field(
        default="raw", description="Feed locations to the agent in meters or min-max scaled to [-1, 1]"
    )

    @property
    def power_budget_p(self) -> float:
        return dbm_to_watts(self.power_budget_dbm)

    @property
    def noise_power_sigma2(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)


class RisPhases(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theta: np.ndarray

    @field_validator("theta", mode="before")
    @classmethod
    def check_unit_modulus(cls, value) -> np.ndarray:
        vec = np.ascontiguousarray(value, dtype=np.complex128).reshape(-1)
        if vec.size == 0 or not np.all(np.abs(np.abs(vec) - 1.0) <= UNIT_MODULUS_TOL):
            raise ValueError("reflection coefficients must have unit modulus")
        return vec

    @property
    def n(self) -> int:
        return int(self.theta.shape[0])


class TransmitCovariance(BaseModel):
    """Hermitian PSD transmit covariance ``Q`` (M × M)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    q: np.ndarray

    @field_validator("q", mode="before")
    @classmethod
    def check_psd(cls, value) -> np.ndarray:
        q = np.ascontiguousarray(value, dtype=np.complex128)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"covariance must be square, got {q.shape}")
        if not is_hermitian(q):
            raise ValueError("covariance must be Hermitian")
        if np.linalg.eigvalsh(0.5 * (q + q.conj().T)).min() < -PSD_TOL:
            raise ValueError("covariance must be positive semidefinite")
        return q

    @property
    def m(self) -> int:
        return int(self.q.shape[0])

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.q)))

    def within_budget(self, p: float) -> bool:
        return self.trace <= p + PSD_TOL


class EnvState(BaseModel):
    """Agent observation: current (Q, θ), the rate they achieve, and device locations."""

    model_config = ConfigDict(frozen=True)

    q: TransmitCovariance
    theta: RisPhases
    rate: float = Field(..., ge=0.0)
    loc_bs: Point3
    loc_ris: Point3
    loc_ue: Point3

    @staticmethod
    def dim(m: int, n: int) -> int:
        return 2 * m * m + 2 * n + 10

    def encode(self, location_transform: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
        """``(vec(Re Q, Im Q), Re θ, Im θ, R, loc_bs, loc_ris, loc_ue)``."""
        locations = np.array([*self.loc_bs, *self.loc_ris, *self.loc_ue], dtype=np.float64)
        if location_transform is not None:
            locations = location_transform(locations)
        return np.concatenate(
            [
                complex_to_realvec(self.q.q),
                self.theta.theta.real,
                self.theta.theta.imag,
                [self.rate],
                locations,
            ]
        )


class EnvAction(BaseModel):
    """Raw actor output ``(vec(Re A, Im A), Re θ, Im θ)`` before projection."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    raw: np.ndarray

    @field_validator("raw", mode="before")
    @classmethod
    def check_range(cls, value) -> np.ndarray:
        vec = np.ascontiguousarray(value, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vec)) or np.any(np.abs(vec) > 1.0 + 1e-12):
            raise ValueError("action entries must lie in [-1, 1]")
        return vec

    @staticmethod
    def dim(m: int, n: int) -> int:
        return 2 * m * m + 2 * n


class StepOutcome(BaseModel):
    """Result of one environment step; ``true_rate`` is set when a true-channel evaluator is attached."""

    model_config = ConfigDict(frozen=True)

    state: EnvState
    reward: float
    true_rate: float | None = None
