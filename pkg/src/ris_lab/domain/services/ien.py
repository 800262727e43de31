"""Imitation environment network: prediction, exact gradients, dataset and training loop.

Both nets see min-max scaled coordinates. Their raw outputs are decoded column-major
(real block then imaginary block) and multiplied by ``sqrt(output_scale)``, so the
composite ``Ĥ = Ĥ_r diag(θ) Ĝ`` carries the units of the labels. Training minimises the
batch MSE divided by ``output_scale**2``; the reported trace uses the same normalisation.
"""

from pathlib import Path
from typing import Any, Sequence

import numpy as np
import structlog

from ris_lab.core.errors import CheckpointError, DimensionMismatchError
from ris_lab.core.observability import ien_epochs_counter, tracer
from ris_lab.domain.models.environment import RisPhases, TransmitCovariance
from ris_lab.domain.models.geometry import ArrayConfig, BoundingBox, MovementArea, PathLossConfig, ScenarioGeometry
from ris_lab.domain.models.ien import (
    IEN_HIDDEN_DIMS,
    IEN_INPUT_DIM,
    IenDatasetConfig,
    IenGrads,
    IenModel,
    IenSample,
)
from ris_lab.domain.models.network import ActivationKind, SgdConfig
from ris_lab.domain.services.channel import channel_stream, composite_channel, synthesize_channels
from ris_lab.domain.services.environment import achievable_rate
from ris_lab.domain.services.network import (
    backward,
    dumps_checkpoint,
    forward,
    init_mlp,
    mlp_from_dict,
    mlp_to_dict,
    read_checkpoint,
    sgd_step,
)
from ris_lab.utils.csv_io import read_csv, write_csv
from ris_lab.utils.linalg import CMatrix
from ris_lab.utils.rng import RngStream, as_stream

CHECKPOINT_FORMAT = "ris-lab-ien/1"

logger = structlog.get_logger()


def _batch_to_realvec(x: np.ndarray) -> np.ndarray:
    """Row-wise ``complex_to_realvec`` for a stack shaped (B, rows, cols)."""
    flat = np.swapaxes(x, 1, 2).reshape(x.shape[0], -1)
    return np.concatenate([flat.real, flat.imag], axis=1)


def _batch_from_realvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    size = rows * cols
    out = np.empty((v.shape[0], rows, cols), dtype=np.complex128)
    out.real = np.swapaxes(v[:, :size].reshape(v.shape[0], cols, rows), 1, 2)
    out.imag = np.swapaxes(v[:, size:].reshape(v.shape[0], cols, rows), 1, 2)
    return out


def init_ien_model(
    arrays: ArrayConfig,
    coord_bounds: BoundingBox,
    rng_seed: RngStream | int,
    output_scale: float = 1.0,
    hidden_dims: Sequence[int] = IEN_HIDDEN_DIMS,
) -> IenModel:
    rng = as_stream(rng_seed)
    m, k, n = arrays.m_bs, arrays.k_ue, arrays.n
    activations = [ActivationKind.TANH] * len(hidden_dims) + [ActivationKind.LINEAR]
    return IenModel(
        bs_ris_net=init_mlp([IEN_INPUT_DIM, *hidden_dims, 2 * m * n], activations, rng.split("bs-ris-net")),
        ris_ue_net=init_mlp([IEN_INPUT_DIM, *hidden_dims, 2 * k * n], activations, rng.split("ris-ue-net")),
        arrays=arrays,
        coord_bounds=coord_bounds,
        output_scale=output_scale,
    )


def dataset_bounds(samples: Sequence[IenSample]) -> BoundingBox:
    """Bounding box of every device position in a dataset."""
    return BoundingBox.around([p for s in samples for p in (s.loc_bs, s.loc_ris, s.loc_ue)])


def dataset_output_scale(samples: Sequence[IenSample]) -> float:
    """RMS label entry magnitude; 1.0 for an all-zero label set."""
    labels = np.stack([s.label for s in samples])
    rms = float(np.sqrt(np.mean(np.abs(labels) ** 2)))
    return rms if rms > 0.0 else 1.0


def ien_model_for_dataset(
    arrays: ArrayConfig,
    samples: Sequence[IenSample],
    rng_seed: RngStream | int,
    hidden_dims: Sequence[int] = IEN_HIDDEN_DIMS,
) -> IenModel:
    """Fresh model whose input bounds and output scale are fitted to ``samples``."""
    if not samples:
        raise ValueError("ien_model_for_dataset: dataset is empty")
    return init_ien_model(arrays, dataset_bounds(samples), rng_seed, dataset_output_scale(samples), hidden_dims)


def _net_inputs(model: IenModel, loc_bs, loc_ris, loc_ue) -> tuple[np.ndarray, np.ndarray]:
    bs = np.asarray(loc_bs, dtype=np.float64).reshape(-1, 3)
    ris = np.asarray(loc_ris, dtype=np.float64).reshape(-1, 3)
    ue = np.asarray(loc_ue, dtype=np.float64).reshape(-1, 3)
    scale = model.coord_bounds.scale
    return np.hstack([scale(bs), scale(ris)]), np.hstack([scale(ris), scale(ue)])


def _predict_batch(model: IenModel, x_bs: np.ndarray, x_ue: np.ndarray):
    m, k, n = model.arrays.m_bs, model.arrays.k_ue, model.arrays.n
    c = model.channel_scale
    out_g, tape_g = forward(model.bs_ris_net, x_bs)
    out_h, tape_h = forward(model.ris_ue_net, x_ue)
    return c * _batch_from_realvec(out_g, n, m), c * _batch_from_realvec(out_h, k, n), tape_g, tape_h


def _compose(g: np.ndarray, h_r: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    return (h_r * thetas[:, None, :]) @ g


def _theta_vector(theta: RisPhases | np.ndarray, n: int) -> np.ndarray:
    vec = theta.theta if isinstance(theta, RisPhases) else np.asarray(theta, dtype=np.complex128).reshape(-1)
    if vec.shape[0] != n:
        raise DimensionMismatchError("ien_predict", (vec.shape[0],), (n,))
    return vec


def ien_predict(model: IenModel, geom: ScenarioGeometry, theta: RisPhases | np.ndarray) -> tuple[CMatrix, CMatrix, CMatrix]:
    """``(Ĝ, Ĥ_r, Ĥ)`` shaped (N × M), (K × N), (K × M)."""
    vec = _theta_vector(theta, model.arrays.n)
    x_bs, x_ue = _net_inputs(model, geom.loc_bs, geom.loc_ris, geom.loc_ue)
    g, h_r, _, _ = _predict_batch(model, x_bs, x_ue)
    return g[0], h_r[0], _compose(g, h_r, vec[None, :])[0]


def ien_mse(h_hats: Sequence[CMatrix], labels: Sequence[CMatrix]) -> float:
    """Batch mean of ``|Ĥ_v - H̄_v|_F^2``."""
    if len(h_hats) != len(labels):
        raise DimensionMismatchError("ien_mse", (len(h_hats),), (len(labels),))
    if not h_hats:
        raise ValueError("ien_mse: empty batch")
    total = 0.0
    for h_hat, label in zip(h_hats, labels):
        h_hat, label = np.asarray(h_hat), np.asarray(label)
        if h_hat.shape != label.shape:
            raise DimensionMismatchError("ien_mse", h_hat.shape, label.shape)
        total += float(np.sum(np.abs(h_hat - label) ** 2))
    return total / len(h_hats)


def _batch_grads(
    model: IenModel, x_bs: np.ndarray, x_ue: np.ndarray, thetas: np.ndarray, labels: np.ndarray, weight: float
) -> tuple[IenGrads, float]:
    """Gradients of ``weight * sum_v |Ĥ_v - H̄_v|_F^2`` and the unweighted error sum."""
    g, h_r, tape_g, tape_h = _predict_batch(model, x_bs, x_ue)
    h_r_theta = h_r * thetas[:, None, :]
    err = h_r_theta @ g - labels

    # dL/dĜ = 2 (Ĥ_r Θ)^H E and dL/dĤ_r = 2 E (Θ Ĝ)^H, as [Re; Im] gradients
    grad_g = 2.0 * np.conj(np.swapaxes(h_r_theta, 1, 2)) @ err
    grad_h = 2.0 * err @ np.conj(np.swapaxes(thetas[:, :, None] * g, 1, 2))
    c = model.channel_scale
    grads_g, _ = backward(model.bs_ris_net, tape_g, weight * c * _batch_to_realvec(grad_g))
    grads_h, _ = backward(model.ris_ue_net, tape_h, weight * c * _batch_to_realvec(grad_h))
    return IenGrads(bs_ris=grads_g, ris_ue=grads_h), float(np.sum(np.abs(err) ** 2))


def ien_backward(model: IenModel, geom: ScenarioGeometry, theta: RisPhases | np.ndarray, label: CMatrix) -> IenGrads:
    """Exact gradients of ``|Ĥ - H̄|_F^2`` with respect to the parameters of both nets."""
    vec = _theta_vector(theta, model.arrays.n)
    target = np.asarray(label, dtype=np.complex128)
    if target.shape != (model.arrays.k_ue, model.arrays.m_bs):
        raise DimensionMismatchError("ien_backward", target.shape, (model.arrays.k_ue, model.arrays.m_bs))
    x_bs, x_ue = _net_inputs(model, geom.loc_bs, geom.loc_ris, geom.loc_ue)
    grads, _ = _batch_grads(model, x_bs, x_ue, vec[None, :], target[None, :, :], 1.0)
    return grads


def generate_ien_dataset(
    geom_base: ScenarioGeometry,
    arrays: ArrayConfig,
    pl: PathLossConfig,
    cfg: IenDatasetConfig,
    ue_area: MovementArea | None = None,
    channel_seed: int | None = None,
) -> list[IenSample]:
    """U historic UE locations in the movement disc, F random θ per location, true composite labels.

    Channels use the scenario's fixed propagation phases (``channel_seed``, defaulting to
    ``cfg.rng_seed``); each location draws from its own child stream.
    """
    ue_area = ue_area or MovementArea()
    phases = channel_stream(cfg.rng_seed if channel_seed is None else channel_seed)
    root = RngStream(cfg.rng_seed).split("ien-dataset")
    samples: list[IenSample] = []
    with tracer.start_as_current_span("ien.generate_dataset") as span:
        span.set_attribute("ien.u_locations", cfg.u_locations)
        span.set_attribute("ien.f_thetas", cfg.f_thetas_per_location)
        for u in range(cfg.u_locations):
            rng = root.split(f"location-{u}")
            loc_ue = rng.draw_in_disc(ue_area.center, ue_area.radius)
            geom = geom_base.with_ue(loc_ue)
            pair = synthesize_channels(geom, arrays, pl, phases)
            for _ in range(cfg.f_thetas_per_location):
                theta = rng.draw_unit_modulus(arrays.n)
                label = composite_channel(pair, theta)
                if cfg.label_noise_std > 0.0:
                    label = label + cfg.label_noise_std * rng.draw_complex_gaussian(label.shape)
                samples.append(
                    IenSample(
                        loc_bs=geom.loc_bs, loc_ris=geom.loc_ris, loc_ue=geom.loc_ue, theta=RisPhases(theta=theta), label=label
                    )
                )
    logger.info("IEN dataset generated", samples=len(samples), n=arrays.n, paths_ris_ue=geom_base.paths_ris_ue)
    return samples


def _stack_dataset(model: IenModel, dataset: Sequence[IenSample]):
    for s in dataset:
        if not s.matches(model.arrays):
            raise DimensionMismatchError("train_ien", s.label.shape, (model.arrays.k_ue, model.arrays.m_bs))
    x_bs, x_ue = _net_inputs(
        model, [s.loc_bs for s in dataset], [s.loc_ris for s in dataset], [s.loc_ue for s in dataset]
    )
    thetas = np.stack([s.theta.theta for s in dataset])
    labels = np.stack([s.label for s in dataset])
    return x_bs, x_ue, thetas, labels


def _normalised_mse(model: IenModel, x_bs, x_ue, thetas, labels) -> float:
    g, h_r, _, _ = _predict_batch(model, x_bs, x_ue)
    err = _compose(g, h_r, thetas) - labels
    return float(np.mean(np.sum(np.abs(err) ** 2, axis=(1, 2)))) / model.output_scale**2


def ien_training_mse(model: IenModel, dataset: Sequence[IenSample]) -> float:
    """MSE over ``dataset`` divided by ``output_scale**2``."""
    return _normalised_mse(model, *_stack_dataset(model, dataset))


def train_ien(
    model: IenModel,
    dataset: Sequence[IenSample],
    epochs: int,
    batch_v: int,
    sgd: SgdConfig,
    rng_seed: RngStream | int = 0,
) -> tuple[IenModel, list[float]]:
    """Mini-batch SGD over full shuffled epochs; returns the model and the per-epoch training MSE."""
    if not dataset:
        raise ValueError("train_ien: dataset is empty")
    if batch_v < 1:
        raise ValueError("train_ien: batch size must be >= 1")
    x_bs, x_ue, thetas, labels = _stack_dataset(model, dataset)
    rng = as_stream(rng_seed).split("ien-shuffle")
    trace: list[float] = []

    with tracer.start_as_current_span("ien.train") as span:
        span.set_attribute("ien.samples", len(dataset))
        span.set_attribute("ien.epochs", epochs)
        for epoch in range(epochs):
            order = rng.permutation(len(dataset))
            for start in range(0, len(order), batch_v):
                idx = order[start : start + batch_v]
                weight = 1.0 / (len(idx) * model.output_scale**2)
                grads, _ = _batch_grads(model, x_bs[idx], x_ue[idx], thetas[idx], labels[idx], weight)
                model = model.model_copy(
                    update={
                        "bs_ris_net": sgd_step(model.bs_ris_net, grads.bs_ris, sgd),
                        "ris_ue_net": sgd_step(model.ris_ue_net, grads.ris_ue, sgd),
                    }
                )
            mse = _normalised_mse(model, x_bs, x_ue, thetas, labels)
            trace.append(mse)
            ien_epochs_counter.inc()
            logger.info("IEN epoch completed", epoch=epoch, mse=mse)
        if trace:
            span.set_attribute("ien.final_mse", trace[-1])
    return model, trace


def ien_predicted_rate(
    model: IenModel, geom: ScenarioGeometry, theta: RisPhases | np.ndarray, q: TransmitCovariance | np.ndarray, sigma2: float
) -> float:
    """Rate the IEN believes ``(q, θ)`` achieves at ``geom``."""
    _, _, h_hat = ien_predict(model, geom, theta)
    return achievable_rate(h_hat, q, sigma2)


class IenChannelOracle:
    """Composite-channel oracle backed by a frozen IEN at one geometry.

    Ĝ and Ĥ_r depend only on coordinates, so they are evaluated once and reused for every θ.
    """

    def __init__(self, model: IenModel, geom: ScenarioGeometry) -> None:
        self.model = model
        self.geom = geom
        x_bs, x_ue = _net_inputs(model, geom.loc_bs, geom.loc_ris, geom.loc_ue)
        g, h_r, _, _ = _predict_batch(model, x_bs, x_ue)
        self.g_hat, self.h_r_hat = g[0], h_r[0]

    def __call__(self, theta: np.ndarray) -> CMatrix:
        vec = _theta_vector(theta, self.model.arrays.n)
        return self.h_r_hat @ (vec[:, None] * self.g_hat)


def ien_to_dict(model: IenModel) -> dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "bs_ris_net": mlp_to_dict(model.bs_ris_net),
        "ris_ue_net": mlp_to_dict(model.ris_ue_net),
        "arrays": model.arrays.model_dump(),
        "coord_low": list(model.coord_bounds.low),
        "coord_high": list(model.coord_bounds.high),
        "output_scale": model.output_scale,
    }


def ien_from_dict(doc: dict[str, Any]) -> IenModel:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unsupported IEN checkpoint format: {doc.get('format')!r}")
    try:
        return IenModel(
            bs_ris_net=mlp_from_dict(doc["bs_ris_net"]),
            ris_ue_net=mlp_from_dict(doc["ris_ue_net"]),
            arrays=ArrayConfig.model_validate(doc["arrays"]),
            coord_bounds=BoundingBox(low=tuple(doc["coord_low"]), high=tuple(doc["coord_high"])),
            output_scale=doc["output_scale"],
        )
    except KeyError as e:
        raise CheckpointError(f"IEN checkpoint is missing field {e}") from None


def save_ien(model: IenModel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(ien_to_dict(model)))
    logger.debug("IEN checkpoint written", path=str(path))
    return path


def load_ien(path: Path) -> IenModel:
    return ien_from_dict(read_checkpoint(path))


def dataset_header(n: int, km: int) -> list[str]:
    header = ["sample"]
    for device in ("bs", "ris", "ue"):
        header += [f"{device}_{axis}" for axis in "xyz"]
    header += [f"theta_re_{i}" for i in range(n)] + [f"theta_im_{i}" for i in range(n)]
    header += [f"label_re_{i}" for i in range(km)] + [f"label_im_{i}" for i in range(km)]
    return header


def write_ien_dataset(path: Path, samples: Sequence[IenSample], meta: dict[str, Any] | None = None) -> Path:
    """CSV with one row per sample; labels are vectorised column-major."""
    if not samples:
        raise ValueError("write_ien_dataset: no samples")
    n, km = samples[0].theta.n, samples[0].label.size
    rows = []
    for i, s in enumerate(samples):
        label = s.label.ravel(order="F")
        rows.append(
            [i, *s.loc_bs, *s.loc_ris, *s.loc_ue, *s.theta.theta.real, *s.theta.theta.imag, *label.real, *label.imag]
        )
    return write_csv(path, dataset_header(n, km), rows, meta)


def read_ien_dataset(path: Path, k: int) -> list[IenSample]:
    """Inverse of :func:`write_ien_dataset`; ``k`` is the number of UE antennas (label rows)."""
    _, rows = read_csv(path)
    samples = []
    for row in rows:
        n = sum(1 for key in row if key.startswith("theta_re_"))
        km = sum(1 for key in row if key.startswith("label_re_"))
        if km % k:
            raise DimensionMismatchError("read_ien_dataset", (km,), (k,))

        def col(prefix: str, count: int) -> np.ndarray:
            return np.array([float(row[f"{prefix}{i}"]) for i in range(count)])

        def point(device: str) -> tuple[float, float, float]:
            return tuple(float(row[f"{device}_{axis}"]) for axis in "xyz")

        theta = col("theta_re_", n) + 1j * col("theta_im_", n)
        label = (col("label_re_", km) + 1j * col("label_im_", km)).reshape((k, km // k), order="F")
        samples.append(
            IenSample(loc_bs=point("bs"), loc_ris=point("ris"), loc_ue=point("ue"), theta=RisPhases(theta=theta), label=label)
        )
    return samples
