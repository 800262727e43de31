from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ActivationKind(str, Enum):
    """Per-layer activation tag."""

    TANH = "tanh"
    LINEAR = "linear"


def _as_float_array(value) -> np.ndarray:
    return np.ascontiguousarray(value, dtype=np.float64)


class DenseLayer(BaseModel):
    """Fully connected layer ``act(W x + b)`` with ``W`` shaped (out_dim, in_dim)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray
    biases: np.ndarray
    activation: ActivationKind

    coerce_arrays = field_validator("weights", "biases", mode="before")(_as_float_array)

    @model_validator(mode="after")
    def check_shapes(self) -> "DenseLayer":  # Weight/bias shapes must agree and hold finite values !!!
        if self.weights.ndim != 2 or self.biases.ndim != 1 or self.biases.shape[0] != self.weights.shape[0]:
            raise ValueError(f"inconsistent layer shapes: weights {self.weights.shape}, biases {self.biases.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("layer parameters must be finite")
        return self

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])


class Mlp(BaseModel):
    """Dense feed-forward network."""

    model_config = ConfigDict(frozen=True)

    layers: list[DenseLayer] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_chain(self) -> "Mlp":
        for k, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(f"layer {k} out_dim {prev.out_dim} does not feed layer {k + 1} in_dim {nxt.in_dim}")
        return self

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def activations(self) -> list[ActivationKind]:
        return [layer.activation for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def parameter_count(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)


class SgdConfig(BaseModel):
    """Plain SGD step size."""

    learning_rate: float = Field(default=0.001, gt=0.0)


class ForwardTape(BaseModel):
    """Per-layer inputs and post-activation outputs of one forward pass (2-D, one row per sample)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    batched: bool


class LayerGrads(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray
    biases: np.ndarray


class MlpGrads(BaseModel):
    """Gradients shaped like an :class:`Mlp`, layer by layer."""

    model_config = ConfigDict(frozen=True)

    layers: list[LayerGrads]

    def scaled(self, factor: float) -> "MlpGrads":
        return MlpGrads(
            layers=[LayerGrads(weights=g.weights * factor, biases=g.biases * factor) for g in self.layers]
        )
