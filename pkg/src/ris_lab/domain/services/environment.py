from typing import Callable, Sequence

import numpy as np
import structlog

from ris_lab.core.errors import DimensionMismatchError, InfeasibleError
from ris_lab.domain.models.environment import (
    ChannelOracle,
    EnvAction,
    EnvConfig,
    EnvState,
    RisPhases,
    StepOutcome,
    TransmitCovariance,
)
from ris_lab.domain.models.geometry import BoundingBox, ChannelPair, MovementArea, ScenarioGeometry
from ris_lab.domain.services.channel import composite_channel
from ris_lab.utils.linalg import (
    CMatrix,
    as_cmatrix,
    complex_to_realvec,
    frob_norm_sq,
    hermitian_eig,
    hermitian_sqrt,
    logdet_capacity,
    realvec_to_complex,
)
from ris_lab.utils.rng import RngStream

GAIN_FLOOR = 1e-12
BISECTION_STEPS = 200

StateEncoder = Callable[[EnvState], np.ndarray]

logger = structlog.get_logger()


def achievable_rate(h_bar: CMatrix, q: TransmitCovariance | np.ndarray, sigma2: float) -> float:
    """``log2 det(I_K + H Q H^H / sigma2)`` in bits."""
    h = as_cmatrix(h_bar)
    qm = q.q if isinstance(q, TransmitCovariance) else as_cmatrix(q)
    if h.shape[1] != qm.shape[0]:
        raise DimensionMismatchError("achievable_rate", h.shape, qm.shape)
    x = np.eye(h.shape[0]) + (h @ qm @ h.conj().T) / sigma2
    return max(0.0, logdet_capacity(x))


def _theta_from_pairs(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    mag = np.hypot(re, im)
    theta = np.ones(re.shape[0], dtype=np.complex128)
    nz = mag > 0.0
    theta[nz] = (re[nz] + 1j * im[nz]) / mag[nz]
    return theta


def project_action(a: EnvAction | np.ndarray, p: float, m: int) -> tuple[TransmitCovariance, RisPhases]:
    """Map a raw action onto the feasible set: ``Q = p AA^H / tr(AA^H)`` and unit-modulus θ."""
    raw = a.raw if isinstance(a, EnvAction) else np.asarray(a, dtype=np.float64).reshape(-1)
    q_len = 2 * m * m
    if raw.shape[0] <= q_len or (raw.shape[0] - q_len) % 2:
        raise DimensionMismatchError("project_action", raw.shape, (q_len + 2,))
    n = (raw.shape[0] - q_len) // 2

    amat = realvec_to_complex(raw[:q_len], m, m)
    gram = amat @ amat.conj().T
    gram = 0.5 * (gram + gram.conj().T)
    trace = float(np.real(np.trace(gram)))
    q = (p / trace) * gram if trace > 0.0 else (p / m) * np.eye(m, dtype=np.complex128)

    theta = _theta_from_pairs(raw[q_len : q_len + n], raw[q_len + n :])
    return TransmitCovariance(q=q), RisPhases(theta=theta)


def encode_action(q: TransmitCovariance, theta: RisPhases) -> EnvAction:
    """A raw action whose projection returns ``(q, theta)`` (for a full-power ``q``)."""
    root = hermitian_sqrt(q.q)
    q_part = complex_to_realvec(root)
    q_part = q_part / max(float(np.max(np.abs(q_part))), 1.0)
    return EnvAction(raw=np.concatenate([q_part, theta.theta.real, theta.theta.imag]))


def waterfill_powers(gains: np.ndarray, p: float) -> tuple[np.ndarray, float]:
    """Power per mode ``max(0, mu - 1/gain)`` summing to ``p``; returns (powers, water level)."""
    gains = np.asarray(gains, dtype=np.float64)
    if gains.size == 0 or gains.max() <= 0.0:
        raise InfeasibleError("waterfill: channel has no usable eigenmode")
    active = gains > GAIN_FLOOR * gains.max()
    inv = np.full(gains.shape, np.inf)
    inv[active] = 1.0 / gains[active]

    lo, hi = 0.0, p + inv[active].max()
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if np.sum(np.clip(mid - inv, 0.0, None)) > p:
            hi = mid
        else:
            lo = mid
    support = (0.5 * (lo + hi) - inv) > 0.0
    if not support.any():
        support = inv == inv[active].min()

    # exact level on the support found by bisection; shrink if a mode falls below the floor
    while True:
        mu = (p + inv[support].sum()) / support.sum()
        weakest = np.where(support, inv, -np.inf).argmax()
        if mu - inv[weakest] >= 0.0 or support.sum() == 1:
            break
        support[weakest] = False
    powers = np.where(support, mu - np.where(support, inv, 0.0), 0.0)
    return np.clip(powers, 0.0, None), float(mu)


def waterfill(h_bar: CMatrix, p: float, sigma2: float) -> TransmitCovariance:
    """Capacity-achieving covariance for a fixed composite channel."""
    h = as_cmatrix(h_bar)
    if frob_norm_sq(h) == 0.0:
        raise InfeasibleError("waterfill: all-zero channel")
    gram = (h.conj().T @ h) / sigma2
    gains, vectors = hermitian_eig(0.5 * (gram + gram.conj().T))
    powers, _ = waterfill_powers(gains, p)
    q = (vectors * powers) @ vectors.conj().T
    return TransmitCovariance(q=0.5 * (q + q.conj().T))


def env_step(state: EnvState, action: EnvAction, channel_oracle: ChannelOracle, env: EnvConfig) -> tuple[EnvState, float]:
    """Project the action, query the channel under the new θ and score the new (Q, θ)."""
    q, theta = project_action(action, env.power_budget_p, state.q.m)
    h_bar = channel_oracle(theta.theta)
    rate = achievable_rate(h_bar, q, env.noise_power_sigma2)
    next_state = EnvState(q=q, theta=theta, rate=rate, loc_bs=state.loc_bs, loc_ris=state.loc_ris, loc_ue=state.loc_ue)
    return next_state, rate


def random_feasible(m: int, n: int, p: float, rng: RngStream) -> tuple[TransmitCovariance, RisPhases]:
    """Random full-power covariance and uniform random phases."""
    amat = rng.draw_complex_gaussian((m, m))
    gram = amat @ amat.conj().T
    gram = 0.5 * (gram + gram.conj().T)
    q = (p / float(np.real(np.trace(gram)))) * gram
    return TransmitCovariance(q=q), RisPhases(theta=rng.draw_unit_modulus(n))


def perturb_location(u, eta_target: float, ue_area: MovementArea, rng: RngStream) -> np.ndarray:
    """Displace ``u`` by ``eta_target * |area center|`` in a uniformly random direction.

    The fixed radius makes the expected displacement over the area divided by the expected
    UE distance from the origin converge to ``eta_target`` (up to the disc's small spread).
    """
    if eta_target < 0.0:
        raise ValueError("perturb_location: eta_target must be >= 0")
    point = np.asarray(u, dtype=np.float64)
    if eta_target == 0.0:
        return point.copy()
    return point + eta_target * ue_area.center_norm * rng.draw_unit_vector3()


def location_error_ratio(us: Sequence, u_hats: Sequence) -> float:
    """Sample estimate of ``E|u - û| / E|u|``."""
    u = np.asarray(us, dtype=np.float64).reshape(-1, 3)
    uh = np.asarray(u_hats, dtype=np.float64).reshape(-1, 3)
    if u.shape != uh.shape:
        raise DimensionMismatchError("location_error_ratio", u.shape, uh.shape)
    return float(np.mean(np.linalg.norm(u - uh, axis=1)) / np.mean(np.linalg.norm(u, axis=1)))


class TrueChannelOracle:
    """Composite channel of a fixed ground-truth realization."""

    def __init__(self, pair: ChannelPair) -> None:
        self.pair = pair

    def __call__(self, theta: np.ndarray) -> CMatrix:
        return composite_channel(self.pair, theta)


def location_state_encoder(bounds: BoundingBox | None = None) -> StateEncoder:
    """Location-aware state encoding; ``bounds`` switches on min-max scaling of the coordinates."""
    transform = bounds.scale if bounds is not None else None

    def encode(state: EnvState) -> np.ndarray:
        return state.encode(transform)

    return encode


class RisEnvironment:
    """Decision environment driven by a channel oracle (true channel or IEN prediction)."""

    def __init__(
        self,
        geometry: ScenarioGeometry,
        m: int,
        n: int,
        env: EnvConfig,
        oracle: ChannelOracle,
        evaluator: ChannelOracle | None = None,
        state_encoder: StateEncoder | None = None,
        state_dim: int | None = None,
    ) -> None:  # Bind geometry, channel oracle and state encoding for one training run !!!
        self.geometry = geometry
        self.m, self.n = m, n
        self.env = env
        self.oracle = oracle
        self.evaluator = evaluator
        self.state_encoder = state_encoder or location_state_encoder()
        self.state_dim = state_dim or EnvState.dim(m, n)
        self.action_dim = EnvAction.dim(m, n)

    def reset(self, rng: RngStream) -> EnvState:
        q, theta = random_feasible(self.m, self.n, self.env.power_budget_p, rng)
        rate = achievable_rate(self.oracle(theta.theta), q, self.env.noise_power_sigma2)
        return EnvState(
            q=q,
            theta=theta,
            rate=rate,
            loc_bs=self.geometry.loc_bs,
            loc_ris=self.geometry.loc_ris,
            loc_ue=self.geometry.loc_ue,
        )

    def observe(self, state: EnvState) -> np.ndarray:
        vec = self.state_encoder(state)
        if vec.shape[0] != self.state_dim:
            raise DimensionMismatchError("observe", vec.shape, (self.state_dim,))
        return vec

    def true_rate(self, state: EnvState) -> float | None:
        if self.evaluator is None:
            return None
        return achievable_rate(self.evaluator(state.theta.theta), state.q, self.env.noise_power_sigma2)

    def step(self, state: EnvState, raw_action: np.ndarray) -> StepOutcome:
        next_state, reward = env_step(state, EnvAction(raw=raw_action), self.oracle, self.env)
        return StepOutcome(state=next_state, reward=reward, true_rate=self.true_rate(next_state))
