from pathlib import Path
from typing import Any, Sequence

import numpy as np
import orjson
import structlog

from ris_lab.core.errors import CheckpointError, DimensionMismatchError
from ris_lab.domain.models.network import (
    ActivationKind,
    DenseLayer,
    ForwardTape,
    LayerGrads,
    Mlp,
    MlpGrads,
    SgdConfig,
)
from ris_lab.utils.rng import RngStream, as_stream

CHECKPOINT_FORMAT = "ris-lab-mlp/1"

logger = structlog.get_logger()


def _activate(z: np.ndarray, kind: ActivationKind) -> np.ndarray:
    return np.tanh(z) if kind is ActivationKind.TANH else z


def _activation_slope(out: np.ndarray, kind: ActivationKind) -> np.ndarray | float:
    # tanh' expressed through the cached output
    return 1.0 - out * out if kind is ActivationKind.TANH else 1.0


def init_mlp(
    dims: Sequence[int], activations: Sequence[ActivationKind | str], rng_seed: RngStream | int
) -> Mlp:  # Glorot-uniform weights with zero biases, deterministic per seed !!!
    if not dims:
        raise ValueError("init_mlp: dims must not be empty")
    if len(dims) != len(activations) + 1:
        raise DimensionMismatchError("init_mlp", (len(dims),), (len(activations) + 1,))
    rng = as_stream(rng_seed)
    layers = []
    for fan_in, fan_out, kind in zip(dims[:-1], dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = (2.0 * rng.draw_uniform((fan_out, fan_in)) - 1.0) * limit
        layers.append(DenseLayer(weights=weights, biases=np.zeros(fan_out), activation=ActivationKind(kind)))
    return Mlp(layers=layers)


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Evaluate ``net`` on one input vector or a batch of row vectors."""
    arr = np.asarray(x, dtype=np.float64)
    batched = arr.ndim == 2
    h = arr if batched else arr.reshape(1, -1)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise DimensionMismatchError("forward", arr.shape, (net.input_dim,))

    inputs, outputs = [], []
    for layer in net.layers:
        inputs.append(h)
        h = _activate(h @ layer.weights.T + layer.biases, layer.activation)
        outputs.append(h)
    tape = ForwardTape(inputs=inputs, outputs=outputs, batched=batched)
    return (h if batched else h[0]), tape


def backward(net: Mlp, tape: ForwardTape, output_grad: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Reverse-mode gradients of the scalar whose output gradient is ``output_grad``.

    For a batched tape the parameter gradients are summed over rows; callers fold any
    batch averaging into ``output_grad``.
    """
    if len(tape.inputs) != len(net.layers):
        raise DimensionMismatchError("backward", (len(tape.inputs),), (len(net.layers),))
    grad = np.asarray(output_grad, dtype=np.float64)
    if not tape.batched:
        grad = grad.reshape(1, -1)
    if grad.shape != tape.outputs[-1].shape:
        raise DimensionMismatchError("backward", grad.shape, tape.outputs[-1].shape)

    layer_grads: list[LayerGrads] = []
    for layer, layer_in, layer_out in zip(reversed(net.layers), reversed(tape.inputs), reversed(tape.outputs)):
        if layer_in.shape[1] != layer.in_dim or layer_out.shape[1] != layer.out_dim:
            raise DimensionMismatchError("backward", layer_in.shape, layer.weights.shape)
        delta = grad * _activation_slope(layer_out, layer.activation)
        layer_grads.append(LayerGrads(weights=delta.T @ layer_in, biases=delta.sum(axis=0)))
        grad = delta @ layer.weights
    layer_grads.reverse()
    input_grad = grad if tape.batched else grad[0]
    return MlpGrads(layers=layer_grads), input_grad


def sgd_step(net: Mlp, grads: MlpGrads, cfg: SgdConfig) -> Mlp:
    if len(grads.layers) != len(net.layers):
        raise DimensionMismatchError("sgd_step", (len(grads.layers),), (len(net.layers),))
    lr = cfg.learning_rate
    return Mlp(
        layers=[
            DenseLayer(weights=layer.weights - lr * g.weights, biases=layer.biases - lr * g.biases, activation=layer.activation)
            for layer, g in zip(net.layers, grads.layers)
        ]
    )


def blend(source: Mlp, target: Mlp, rho: float) -> Mlp:
    """Element-wise ``rho * source + (1 - rho) * target``."""
    if source.dims != target.dims:
        raise DimensionMismatchError("blend", tuple(source.dims), tuple(target.dims))
    return Mlp(
        layers=[
            DenseLayer(
                weights=rho * s.weights + (1.0 - rho) * t.weights,
                biases=rho * s.biases + (1.0 - rho) * t.biases,
                activation=t.activation,
            )
            for s, t in zip(source.layers, target.layers)
        ]
    )


def copy_mlp(net: Mlp) -> Mlp:
    return Mlp(
        layers=[
            DenseLayer(weights=layer.weights.copy(), biases=layer.biases.copy(), activation=layer.activation)
            for layer in net.layers
        ]
    )


def zero_like(net: Mlp) -> Mlp:
    return Mlp(
        layers=[
            DenseLayer(
                weights=np.zeros_like(layer.weights), biases=np.zeros_like(layer.biases), activation=layer.activation
            )
            for layer in net.layers
        ]
    )


def mlp_to_dict(net: Mlp) -> dict[str, Any]:
    """Checkpoint document: dims, activation tags, then per-layer row-major weights and biases."""
    return {
        "format": CHECKPOINT_FORMAT,
        "dims": net.dims,
        "activations": [kind.value for kind in net.activations],
        "layers": [
            {"weights": np.ascontiguousarray(layer.weights), "biases": np.ascontiguousarray(layer.biases)}
            for layer in net.layers
        ],
    }


def mlp_from_dict(doc: dict[str, Any]) -> Mlp:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unsupported MLP checkpoint format: {doc.get('format')!r}")
    net = Mlp(
        layers=[
            DenseLayer(weights=np.asarray(entry["weights"]), biases=np.asarray(entry["biases"]), activation=kind)
            for entry, kind in zip(doc["layers"], doc["activations"])
        ]
    )
    if net.dims != list(doc["dims"]):
        raise CheckpointError(f"checkpoint dims {doc['dims']} do not match stored layers {net.dims}")
    return net


def dumps_checkpoint(doc: dict[str, Any]) -> bytes:
    return orjson.dumps(doc, option=orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_SORT_KEYS)


def read_checkpoint(path: Path) -> dict[str, Any]:  # Load an orjson checkpoint document from disk !!!
    try:
        return orjson.loads(Path(path).read_bytes())
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except orjson.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {e}") from None


def save_mlp(net: Mlp, path: Path) -> None:
    Path(path).write_bytes(dumps_checkpoint(mlp_to_dict(net)))
    logger.debug("MLP checkpoint written", path=str(path), dims=net.dims)


def load_mlp(path: Path) -> Mlp:
    return mlp_from_dict(read_checkpoint(path))
