"""Geometric Saleh-Valenzuela synthesis of the BS-RIS and RIS-UE channels.

Conventions:
- The RIS panel is treated in the global frame: its UPA angles come straight from
  :func:`angles_between` with no per-panel rotation.
- UPA element ``n = iy * n_x + ix`` (horizontal index fastest); θ uses the same indexing.
- Path 0 of each link is the line-of-sight segment; every scatterer adds one path whose
  distance is the sum of its two segments and whose loss uses that link's exponent.
- Each path gain is ``sqrt(PL) * exp(jχ)``. The χ of link ``bs-ris`` / ``ris-ue`` are drawn
  from ``rng.split("bs-ris")`` / ``rng.split("ris-ue")``, so a given stream always yields
  the same phases for a link and adding a scatterer leaves earlier paths untouched.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import structlog

from ris_lab.core.errors import DimensionMismatchError, InfeasibleError
from ris_lab.domain.models.geometry import AngleSet, ArrayConfig, ChannelPair, PathLossConfig, Point3, ScenarioGeometry
from ris_lab.utils.csv_io import read_csv, write_csv
from ris_lab.utils.linalg import CMatrix
from ris_lab.utils.rng import RngStream
from ris_lab.utils.units import db_to_linear

UNIT_MODULUS_TOL = 1e-9

logger = structlog.get_logger()


@dataclass(frozen=True)
class PropagationPath:
    """Angles and length of one path, as seen from the transmitting and receiving arrays."""

    departure: AngleSet
    arrival: AngleSet
    distance: float


def ula_steering(phi: float, n_l: int) -> CMatrix:
    if n_l < 1:
        raise ValueError("ula_steering: n_l must be >= 1")
    n = np.arange(n_l)
    return (np.exp(1j * np.pi * n * np.sin(phi)) / np.sqrt(n_l)).reshape(-1, 1)


def upa_steering(psi: float, phi: float, n_x: int, n_y: int) -> CMatrix:
    if n_x < 1 or n_y < 1:
        raise ValueError("upa_steering: n_x and n_y must be >= 1")
    ix = np.tile(np.arange(n_x), n_y)
    iy = np.repeat(np.arange(n_y), n_x)
    phase = np.pi * (ix * np.sin(psi) * np.cos(phi) + iy * np.sin(phi))
    return (np.exp(1j * phase) / np.sqrt(n_x * n_y)).reshape(-1, 1)


def angles_between(src: Point3, dst: Point3) -> AngleSet:
    delta = np.asarray(dst, dtype=np.float64) - np.asarray(src, dtype=np.float64)
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise InfeasibleError(f"angles_between: coincident points {tuple(src)}")
    azimuth = float(np.arctan2(delta[1], delta[0]))
    if azimuth <= -np.pi:
        azimuth += 2.0 * np.pi
    elevation = float(np.arcsin(np.clip(delta[2] / dist, -1.0, 1.0)))
    return AngleSet(azimuth=azimuth, elevation=elevation)


def path_loss_linear(d: float, alpha: float, cfg: PathLossConfig) -> float:
    if d <= 0.0:
        raise InfeasibleError(f"path_loss_linear: distance must be positive, got {d}")
    return db_to_linear(cfg.c0_db) * d ** (-alpha)


def _distance(a: Point3, b: Point3) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)))


def link_paths(tx: Point3, rx: Point3, scatterers: list[Point3]) -> list[PropagationPath]:
    """LoS path followed by one single-bounce path per scatterer."""
    paths = [PropagationPath(angles_between(tx, rx), angles_between(rx, tx), _distance(tx, rx))]
    for s in scatterers:
        paths.append(PropagationPath(angles_between(tx, s), angles_between(rx, s), _distance(tx, s) + _distance(s, rx)))
    return paths


def synthesize_path_components(
    geom: ScenarioGeometry, arrays: ArrayConfig, pl: PathLossConfig, rng: RngStream
) -> tuple[list[CMatrix], list[CMatrix]]:  # Per-path terms of G and H_r, before summation !!!
    g_paths = link_paths(geom.loc_bs, geom.loc_ris, geom.scatterers_bs_ris)
    h_paths = link_paths(geom.loc_ris, geom.loc_ue, geom.scatterers_ris_ue)
    g_phases = rng.split("bs-ris").draw_phases(len(g_paths))
    h_phases = rng.split("ris-ue").draw_phases(len(h_paths))

    m, k, n = arrays.m_bs, arrays.k_ue, arrays.n
    g_scale = np.sqrt(m * n / len(g_paths))
    h_scale = np.sqrt(n * k / len(h_paths))

    g_terms = []
    for path, chi in zip(g_paths, g_phases):
        gain = np.sqrt(path_loss_linear(path.distance, pl.alpha_bs_ris, pl)) * np.exp(1j * chi)
        a_rx = upa_steering(path.arrival.azimuth, path.arrival.elevation, arrays.n_x, arrays.n_y)
        a_tx = ula_steering(path.departure.elevation, m)
        g_terms.append(g_scale * gain * (a_rx @ a_tx.conj().T))

    h_terms = []
    for path, chi in zip(h_paths, h_phases):
        gain = np.sqrt(path_loss_linear(path.distance, pl.alpha_ris_ue, pl)) * np.exp(1j * chi)
        a_rx = ula_steering(path.arrival.elevation, k)
        a_tx = upa_steering(path.departure.azimuth, path.departure.elevation, arrays.n_x, arrays.n_y)
        h_terms.append(h_scale * gain * (a_rx @ a_tx.conj().T))
    return g_terms, h_terms


def synthesize_channels(geom: ScenarioGeometry, arrays: ArrayConfig, pl: PathLossConfig, rng: RngStream) -> ChannelPair:
    g_terms, h_terms = synthesize_path_components(geom, arrays, pl, rng)
    return ChannelPair(g=np.sum(g_terms, axis=0), h_r=np.sum(h_terms, axis=0))


def channel_stream(seed: int) -> RngStream:
    """Propagation-phase stream of a scenario; fixed per seed so channels depend only on geometry."""
    return RngStream(seed).split("channel")


def true_channels(geom: ScenarioGeometry, arrays: ArrayConfig, pl: PathLossConfig, seed: int) -> ChannelPair:
    return synthesize_channels(geom, arrays, pl, channel_stream(seed))


def check_unit_modulus(theta: np.ndarray, tol: float = UNIT_MODULUS_TOL) -> np.ndarray:
    vec = np.asarray(theta, dtype=np.complex128).reshape(-1)
    if not np.all(np.abs(np.abs(vec) - 1.0) <= tol):
        worst = float(np.max(np.abs(np.abs(vec) - 1.0)))
        raise InfeasibleError(f"reflection coefficients must have unit modulus (worst deviation {worst:.3e})")
    return vec


def composite_channel(pair: ChannelPair, theta: np.ndarray) -> CMatrix:
    """``H_r diag(θ) G`` (K × M)."""
    vec = check_unit_modulus(theta)
    if vec.shape[0] != pair.n:
        raise DimensionMismatchError("composite_channel", (vec.shape[0],), (pair.n,))
    return pair.h_r @ (vec[:, None] * pair.g)


def write_channel_fixture(
    path: Path,
    geom: ScenarioGeometry,
    arrays: ArrayConfig,
    pl: PathLossConfig,
    rng: RngStream,
    meta: dict[str, Any] | None = None,
) -> Path:  # Dump every path term of both links as a golden CSV !!!
    g_terms, h_terms = synthesize_path_components(geom, arrays, pl, rng)
    rows = []
    for link, terms in (("G", g_terms), ("H_r", h_terms)):
        for p, term in enumerate(terms):
            for (r, c), value in np.ndenumerate(term):
                rows.append((link, p, r, c, value.real, value.imag))
    logger.debug("Channel fixture written", path=str(path), rows=len(rows))
    return write_csv(path, ["link", "path", "row", "col", "re", "im"], rows, meta)


def read_channel_fixture(path: Path) -> ChannelPair:
    """Sum the per-path terms of a fixture back into a :class:`ChannelPair`."""
    _, rows = read_csv(path)
    shapes: dict[str, tuple[int, int]] = {}
    for row in rows:
        r, c = int(row["row"]), int(row["col"])
        prev = shapes.get(row["link"], (0, 0))
        shapes[row["link"]] = (max(prev[0], r + 1), max(prev[1], c + 1))
    mats = {link: np.zeros(shape, dtype=np.complex128) for link, shape in shapes.items()}
    for row in rows:
        mats[row["link"]][int(row["row"]), int(row["col"])] += complex(float(row["re"]), float(row["im"]))
    return ChannelPair(g=mats["G"], h_r=mats["H_r"])
