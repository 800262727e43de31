"""Comparison schemes: alternating optimization, random phases and the CSI-state encoding."""

import numpy as np
import structlog

from ris_lab.core.errors import DimensionMismatchError
from ris_lab.core.observability import ao_sweeps_counter, tracer
from ris_lab.domain.models.baselines import AoConfig, AoResult, RandomPhaseResult
from ris_lab.domain.models.environment import EnvConfig, EnvState, RisPhases, TransmitCovariance
from ris_lab.domain.models.geometry import ChannelPair
from ris_lab.domain.services.channel import composite_channel
from ris_lab.domain.services.environment import StateEncoder, achievable_rate, waterfill
from ris_lab.utils.linalg import CMatrix, complex_to_realvec, logdet_capacity_batch, realvec_to_complex
from ris_lab.utils.rng import RngStream, as_stream

logger = structlog.get_logger()


def _candidate_rates(
    h_bar: CMatrix, pair: ChannelPair, q: np.ndarray, sigma2: float, element: int, deltas: np.ndarray
) -> np.ndarray:
    """Rates of ``h_bar + delta * h_r[:, n] g[n, :]`` for every ``delta``; one batched log-det."""
    rank_one = np.outer(pair.h_r[:, element], pair.g[element, :])
    stack = h_bar[None, :, :] + deltas[:, None, None] * rank_one[None, :, :]
    gram = stack @ q @ np.conj(np.swapaxes(stack, 1, 2)) / sigma2
    eye = np.eye(h_bar.shape[0])[None, :, :]
    return np.maximum(logdet_capacity_batch(eye + gram), 0.0)


def _sweep_phases(pair: ChannelPair, theta: np.ndarray, q: np.ndarray, sigma2: float, grid: np.ndarray) -> np.ndarray:
    """One pass of per-element grid search; the current phase is always a candidate."""
    theta = theta.copy()
    for n in range(theta.shape[0]):
        h_bar = composite_channel(pair, theta)
        candidates = theta[n] * grid
        rates = _candidate_rates(h_bar, pair, q, sigma2, n, candidates - theta[n])
        best = int(np.argmax(rates))
        if rates[best] > rates[0]:
            theta[n] = candidates[best] / abs(candidates[best])
    return theta


def ao_optimize(pair: ChannelPair, env: EnvConfig, cfg: AoConfig, rng: RngStream | int) -> AoResult:
    """Alternate water-filling for Q with per-element phase grid search from a random θ.

    ``trace[0]`` is the rate after the first water-filling; each further entry closes one sweep
    (phases, then Q), so the trace never decreases.
    """
    rng = as_stream(rng)
    p, sigma2 = env.power_budget_p, env.noise_power_sigma2
    grid = np.exp(2j * np.pi * np.arange(cfg.phase_grid_points) / cfg.phase_grid_points)

    theta = rng.draw_unit_modulus(pair.n)
    q = waterfill(composite_channel(pair, theta), p, sigma2)
    trace = [achievable_rate(composite_channel(pair, theta), q, sigma2)]

    with tracer.start_as_current_span("baselines.ao_optimize") as span:
        span.set_attribute("ao.n", pair.n)
        for sweep in range(cfg.max_sweeps):
            swept = _sweep_phases(pair, theta, q.q, sigma2, grid)
            rate = achievable_rate(composite_channel(pair, swept), q, sigma2)
            if rate >= trace[-1]:
                theta = swept
            else:
                rate = trace[-1]

            refilled = waterfill(composite_channel(pair, theta), p, sigma2)
            refilled_rate = achievable_rate(composite_channel(pair, theta), refilled, sigma2)
            if refilled_rate >= rate:
                q, rate = refilled, refilled_rate

            trace.append(rate)
            ao_sweeps_counter.inc()
            logger.debug("AO sweep completed", sweep=sweep, rate=rate)
            if trace[-1] - trace[-2] < cfg.rate_tolerance:
                break
        span.set_attribute("ao.rate", trace[-1])
        span.set_attribute("ao.sweeps", len(trace) - 1)

    logger.info("AO converged", n=pair.n, rate=trace[-1], sweeps=len(trace) - 1)
    return AoResult(theta=RisPhases(theta=theta), q=q, rate=trace[-1], trace=trace)


def random_phase_baseline(pair: ChannelPair, env: EnvConfig, trials: int, rng: RngStream | int) -> RandomPhaseResult:
    """Mean and best water-filled rate over uniformly random θ."""
    if trials < 1:
        raise ValueError("random_phase_baseline: trials must be >= 1")
    rng = as_stream(rng)
    rates = np.empty(trials)
    for i in range(trials):
        h_bar = composite_channel(pair, rng.draw_unit_modulus(pair.n))
        q = waterfill(h_bar, env.power_budget_p, env.noise_power_sigma2)
        rates[i] = achievable_rate(h_bar, q, env.noise_power_sigma2)
    return RandomPhaseResult(mean_rate=float(rates.mean()), best_rate=float(rates.max()), trials=trials)


def csi_state_dim(m: int, n: int, k: int) -> int:
    return 2 * m * m + 2 * n + 1 + 2 * k * m


def make_csi_state(
    pair: ChannelPair, theta: RisPhases | np.ndarray, q: TransmitCovariance | np.ndarray, rate: float
) -> np.ndarray:
    """``(vec(Re Q, Im Q), Re θ, Im θ, R, vec(Re H̄, Im H̄))`` with ``H̄`` the composite channel under θ."""
    vec = theta.theta if isinstance(theta, RisPhases) else np.asarray(theta, dtype=np.complex128).reshape(-1)
    qm = q.q if isinstance(q, TransmitCovariance) else np.asarray(q, dtype=np.complex128)
    if qm.shape != (pair.m, pair.m):
        raise DimensionMismatchError("make_csi_state", qm.shape, (pair.m, pair.m))
    h_bar = composite_channel(pair, vec)
    return np.concatenate([complex_to_realvec(qm), vec.real, vec.imag, [rate], complex_to_realvec(h_bar)])


def decode_csi_channel(state: np.ndarray, m: int, n: int, k: int) -> CMatrix:
    """The composite channel block at the end of a CSI state."""
    vec = np.asarray(state, dtype=np.float64)
    if vec.shape[0] != csi_state_dim(m, n, k):
        raise DimensionMismatchError("decode_csi_channel", vec.shape, (csi_state_dim(m, n, k),))
    return realvec_to_complex(vec[-2 * k * m :], k, m)


def csi_state_encoder(pair: ChannelPair) -> StateEncoder:
    """State encoding for the CSI-driven agent: locations replaced by the true composite channel."""

    def encode(state: EnvState) -> np.ndarray:
        return make_csi_state(pair, state.theta, state.q, state.rate)

    return encode
