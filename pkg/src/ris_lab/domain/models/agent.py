from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ris_lab.domain.models.environment import RisPhases, TransmitCovariance
from ris_lab.domain.models.network import Mlp
from ris_lab.utils.rng import RngStream


class DdpgConfig(BaseModel):
    """Hyperparameters of the DDPG learner; ``state_dim``/``action_dim`` are bound per scenario."""

    model_config = ConfigDict(frozen=True)

    state_dim: int | None = Field(default=None, ge=1)
    action_dim: int | None = Field(default=None, ge=1)
    hidden_dims: tuple[int, ...] = (500, 300)
    lambda_q: float = Field(default=0.001, gt=0.0, le=1.0, description="Critic learning rate")
    lambda_mu: float = Field(default=0.001, gt=0.0, le=1.0, description="Actor learning rate")
    rho_mu: float = Field(default=0.001, gt=0.0, le=1.0, description="Target actor soft-update rate")
    rho_q: float = Field(default=0.001, gt=0.0, le=1.0, description="Target critic soft-update rate")
    tau_discount: float = Field(default=0.99, gt=0.0, le=1.0)
    batch_v: int = Field(default=16, ge=1)
    buffer_capacity: int = Field(default=10000, ge=1)
    episodes_j: int = Field(default=1000, ge=1)
    steps_t: int = Field(default=50, ge=1)
    noise_std_initial: float = Field(default=0.1, ge=0.0)
    noise_decay: float = Field(default=0.999, gt=0.0, le=1.0)
    actor_gradient_critic: Literal["online", "target"] = "online"
    randomize_ue_location: bool = False

    @model_validator(mode="after")
    def check_capacity(self) -> "DdpgConfig":
        if self.buffer_capacity < self.batch_v:
            raise ValueError(f"buffer_capacity ({self.buffer_capacity}) must be >= batch_v ({self.batch_v})")
        return self

    def with_dims(self, state_dim: int, action_dim: int) -> "DdpgConfig":
        return self.model_validate({**self.model_dump(), "state_dim": state_dim, "action_dim": action_dim})

    def noise_std(self, episode: int) -> float:
        return self.noise_std_initial * self.noise_decay**episode


def _as_vector(value) -> np.ndarray:
    return np.ascontiguousarray(value, dtype=np.float64).reshape(-1)


class Experience(BaseModel):
    """One transition ``(s, a, r, s')``."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray

    coerce_vectors = field_validator("s", "a", "s_next", mode="before")(_as_vector)

    @model_validator(mode="after")
    def check_states(self) -> "Experience":
        if self.s.shape != self.s_next.shape:
            raise ValueError(f"state shapes differ: {self.s.shape} vs {self.s_next.shape}")
        return self


class ExperienceBatch(BaseModel):
    """Stacked transitions, one row per experience."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    @classmethod
    def stack(cls, experiences: list[Experience]) -> "ExperienceBatch":
        if not experiences:
            raise ValueError("cannot stack an empty batch")
        return cls(
            states=np.stack([e.s for e in experiences]),
            actions=np.stack([e.a for e in experiences]),
            rewards=np.array([e.r for e in experiences], dtype=np.float64),
            next_states=np.stack([e.s_next for e in experiences]),
        )

    @property
    def size(self) -> int:
        return int(self.rewards.shape[0])


class ReplayBuffer:
    """Fixed-capacity ring of experiences; the oldest entry is overwritten once full."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int) -> None:
        if capacity < 1:
            raise ValueError("ReplayBuffer: capacity must be >= 1")
        self.capacity = capacity
        self.insertions = 0
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, state_dim))

    def __len__(self) -> int:
        return min(self.insertions, self.capacity)

    def add(self, experience: Experience) -> None:
        slot = self.insertions % self.capacity
        self._states[slot] = experience.s
        self._actions[slot] = experience.a
        self._rewards[slot] = experience.r
        self._next_states[slot] = experience.s_next
        self.insertions += 1

    def _rows(self, idx: np.ndarray) -> ExperienceBatch:
        return ExperienceBatch(
            states=self._states[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_states=self._next_states[idx].copy(),
        )

    def sample(self, v: int, rng: RngStream) -> ExperienceBatch:
        """``v`` distinct stored experiences, uniformly at random."""
        if v > len(self):
            raise ValueError(f"ReplayBuffer: cannot sample {v} from {len(self)} experiences")
        return self._rows(rng.choice(len(self), v, replace=False))

    def contents(self) -> ExperienceBatch:
        """Everything stored, oldest first."""
        size = len(self)
        start = self.insertions % self.capacity if self.insertions > self.capacity else 0
        return self._rows((start + np.arange(size)) % self.capacity)


class AgentNets(BaseModel):
    """Actor, critic and their target copies."""

    model_config = ConfigDict(frozen=True)

    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp

    @model_validator(mode="after")
    def check_dims(self) -> "AgentNets":
        if self.actor.dims != self.target_actor.dims or self.critic.dims != self.target_critic.dims:
            raise ValueError("target networks must match their sources")
        if self.critic.input_dim != self.actor.input_dim + self.actor.output_dim or self.critic.output_dim != 1:
            raise ValueError(f"critic {self.critic.dims} does not score actor {self.actor.dims}")
        return self

    @property
    def state_dim(self) -> int:
        return self.actor.input_dim

    @property
    def action_dim(self) -> int:
        return self.actor.output_dim


class BestAction(BaseModel):
    model_config = ConfigDict(frozen=True)

    q: TransmitCovariance
    theta: RisPhases
    rate: float
    episode: int
    step: int


class TrainingResult(BaseModel):
    """Trained nets, the per-step reward log and the best action found."""

    model_config = ConfigDict(frozen=True)

    nets: AgentNets
    rewards: list[float]
    best: BestAction
    updates: int = 0
