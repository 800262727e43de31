import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Point3 = tuple[float, float, float]


def _finite_point(p: Point3) -> Point3:
    if not all(math.isfinite(c) for c in p):
        raise ValueError(f"coordinates must be finite, got {p}")
    return p


class ScenarioGeometry(BaseModel):
    """3D positions (meters) of the BS, RIS, UE and the scatterers of each link."""

    model_config = ConfigDict(frozen=True)

    loc_bs: Point3
    loc_ris: Point3
    loc_ue: Point3
    scatterers_bs_ris: list[Point3] = Field(default_factory=list)
    scatterers_ris_ue: list[Point3] = Field(default_factory=list)

    @field_validator("loc_bs", "loc_ris", "loc_ue")
    @classmethod
    def check_finite(cls, p: Point3) -> Point3:
        return _finite_point(p)

    @field_validator("scatterers_bs_ris", "scatterers_ris_ue")
    @classmethod
    def check_scatterers(cls, points: list[Point3]) -> list[Point3]:
        return [_finite_point(p) for p in points]

    @model_validator(mode="after")
    def check_distinct(self) -> "ScenarioGeometry":
        if self.loc_bs == self.loc_ris or self.loc_ris == self.loc_ue or self.loc_bs == self.loc_ue:
            raise ValueError("BS, RIS and UE must be pairwise distinct")
        return self

    def with_ue(self, loc_ue) -> "ScenarioGeometry":  # Copy of the geometry with the UE moved !!!
        return self.model_copy(update={"loc_ue": tuple(float(c) for c in loc_ue)})

    @property
    def paths_bs_ris(self) -> int:
        return 1 + len(self.scatterers_bs_ris)

    @property
    def paths_ris_ue(self) -> int:
        return 1 + len(self.scatterers_ris_ue)


class MovementArea(BaseModel):
    """Horizontal disc the UE moves in."""

    model_config = ConfigDict(frozen=True)

    center: Point3 = (10.0, 50.0, 0.0)
    radius: float = Field(default=5.0, ge=0.0)

    @property
    def center_norm(self) -> float:
        return float(np.linalg.norm(self.center))


class BoundingBox(BaseModel):
    """Axis-aligned box used to min-max scale coordinates to [-1, 1]."""

    model_config = ConfigDict(frozen=True)

    low: Point3
    high: Point3

    @classmethod
    def around(cls, points) -> "BoundingBox":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(low=tuple(pts.min(axis=0).tolist()), high=tuple(pts.max(axis=0).tolist()))

    def scale(self, coords: np.ndarray) -> np.ndarray:
        """Scale a flat run of (x, y, z) triples; degenerate axes map to 0."""
        pts = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
        low, high = np.asarray(self.low), np.asarray(self.high)
        span = high - low
        safe = np.where(span > 0.0, span, 1.0)
        scaled = np.where(span > 0.0, 2.0 * (pts - low) / safe - 1.0, 0.0)
        return scaled.reshape(np.shape(coords))


class ArrayConfig(BaseModel):
    """BS and UE ULAs, RIS UPA of n_x horizontal by n_y vertical elements."""

    model_config = ConfigDict(frozen=True)

    m_bs: int = Field(default=4, ge=1)
    k_ue: int = Field(default=4, ge=1)
    n_x: int = Field(default=7, ge=1)
    n_y: int = Field(default=7, ge=1)

    @property
    def n(self) -> int:
        return self.n_x * self.n_y

    @classmethod
    def with_elements(cls, n: int, m_bs: int, k_ue: int) -> "ArrayConfig":
        """Most square n_x × n_y factorization of ``n`` with n_x ≥ n_y."""
        n_y = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
        return cls(m_bs=m_bs, k_ue=k_ue, n_x=n // n_y, n_y=n_y)


class PathLossConfig(BaseModel):
    """Distance law ``C0 d^-alpha`` per link."""

    model_config = ConfigDict(frozen=True)

    c0_db: float = Field(default=-20.0, lt=0.0)
    alpha_bs_ris: float = Field(default=2.0, gt=0.0)
    alpha_ris_ue: float = Field(default=2.8, gt=0.0)


class AngleSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    azimuth: float = Field(..., gt=-math.pi, le=math.pi)
    elevation: float = Field(..., ge=-math.pi / 2, le=math.pi / 2)


class ChannelPair(BaseModel):
    """One realization of the BS-RIS channel ``g`` (N×M) and RIS-UE channel ``h_r`` (K×N)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g: np.ndarray
    h_r: np.ndarray

    @field_validator("g", "h_r", mode="before")
    @classmethod
    def as_complex(cls, value) -> np.ndarray:
        return np.ascontiguousarray(value, dtype=np.complex128)

    @model_validator(mode="after")
    def check_dims(self) -> "ChannelPair":
        if self.g.ndim != 2 or self.h_r.ndim != 2 or self.h_r.shape[1] != self.g.shape[0]:
            raise ValueError(f"incompatible channel shapes: g {self.g.shape}, h_r {self.h_r.shape}")
        return self

    @property
    def n(self) -> int:
        return int(self.g.shape[0])

    @property
    def m(self) -> int:
        return int(self.g.shape[1])

    @property
    def k(self) -> int:
        return int(self.h_r.shape[0])

    def matches(self, arrays: ArrayConfig) -> bool:
        return self.g.shape == (arrays.n, arrays.m_bs) and self.h_r.shape == (arrays.k_ue, arrays.n)
