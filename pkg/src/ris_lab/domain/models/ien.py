import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ris_lab.domain.models.environment import RisPhases
from ris_lab.domain.models.geometry import ArrayConfig, BoundingBox, Point3
from ris_lab.domain.models.network import ActivationKind, Mlp, MlpGrads

IEN_INPUT_DIM = 6
IEN_HIDDEN_DIMS = (128, 64)


class IenModel(BaseModel):
    """Imitation environment network: coordinates -> predicted BS-RIS and RIS-UE channels.

    ``coord_bounds`` min-max scales the six input coordinates of each net to [-1, 1];
    ``output_scale`` multiplies both raw channel outputs by its square root.
    """

    model_config = ConfigDict(frozen=True)

    bs_ris_net: Mlp
    ris_ue_net: Mlp
    arrays: ArrayConfig
    coord_bounds: BoundingBox
    output_scale: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def check_nets(self) -> "IenModel":  # Input/output widths and activation pattern of both nets !!!
        m, k, n = self.arrays.m_bs, self.arrays.k_ue, self.arrays.n
        for name, net, out_dim in (("bs_ris_net", self.bs_ris_net, 2 * m * n), ("ris_ue_net", self.ris_ue_net, 2 * k * n)):
            if net.input_dim != IEN_INPUT_DIM or net.output_dim != out_dim:
                raise ValueError(f"{name} must map {IEN_INPUT_DIM} -> {out_dim}, got {net.dims}")
            kinds = net.activations
            if kinds[-1] is not ActivationKind.LINEAR or any(a is not ActivationKind.TANH for a in kinds[:-1]):
                raise ValueError(f"{name} must use tanh hidden layers and a linear output layer")
        return self

    @property
    def channel_scale(self) -> float:
        return float(np.sqrt(self.output_scale))


class IenGrads(BaseModel):
    """Parameter gradients of both IEN nets."""

    model_config = ConfigDict(frozen=True)

    bs_ris: MlpGrads
    ris_ue: MlpGrads


class IenSample(BaseModel):
    """One training pair: device coordinates and θ in, composite channel (K × M) out."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    loc_bs: Point3
    loc_ris: Point3
    loc_ue: Point3
    theta: RisPhases
    label: np.ndarray

    @field_validator("label", mode="before")
    @classmethod
    def as_complex(cls, value) -> np.ndarray:
        label = np.ascontiguousarray(value, dtype=np.complex128)
        if label.ndim != 2:
            raise ValueError(f"label must be a K x M matrix, got shape {label.shape}")
        return label

    def matches(self, arrays: ArrayConfig) -> bool:
        return self.label.shape == (arrays.k_ue, arrays.m_bs) and self.theta.n == arrays.n


class IenDatasetConfig(BaseModel):
    """Historic locations, θ draws per location, label noise and seed of an IEN dataset."""

    model_config = ConfigDict(frozen=True)

    u_locations: int = Field(default=1000, ge=1)
    f_thetas_per_location: int = Field(default=10, ge=1)
    label_noise_std: float = Field(default=0.0, ge=0.0, description="Std of complex Gaussian noise added to labels")
    rng_seed: int = 0


class IenTrainingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=50, ge=0)
    batch_v: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=0.01, gt=0.0)
    hidden_dims: tuple[int, ...] = IEN_HIDDEN_DIMS
