"""DDPG learner: action selection, the four update rules and the training loop."""

from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import structlog

from ris_lab.core.errors import CheckpointError, ConfigError, DimensionMismatchError
from ris_lab.core.observability import agent_steps_counter, agent_updates_counter, tracer
from ris_lab.domain.models.agent import (
    AgentNets,
    BestAction,
    DdpgConfig,
    Experience,
    ExperienceBatch,
    ReplayBuffer,
    TrainingResult,
)
from ris_lab.domain.models.network import ActivationKind, Mlp, SgdConfig
from ris_lab.domain.services.environment import RisEnvironment
from ris_lab.domain.services.network import (
    backward,
    blend,
    copy_mlp,
    dumps_checkpoint,
    forward,
    init_mlp,
    mlp_from_dict,
    mlp_to_dict,
    read_checkpoint,
    sgd_step,
)
from ris_lab.utils.csv_io import write_csv
from ris_lab.utils.metrics import metric_average_reward
from ris_lab.utils.rng import RngStream, as_stream

CHECKPOINT_FORMAT = "ris-lab-agent/1"

# Builds the environment for a freshly drawn UE location (episode-level relocation)
Relocate = Callable[[RngStream], RisEnvironment]

logger = structlog.get_logger()


def init_agent_nets(cfg: DdpgConfig, rng_seed: RngStream | int) -> AgentNets:
    if cfg.state_dim is None or cfg.action_dim is None:
        raise ValueError("init_agent_nets: DdpgConfig has no state/action dimensions bound")
    rng = as_stream(rng_seed)
    hidden = list(cfg.hidden_dims)
    actor = init_mlp(
        [cfg.state_dim, *hidden, cfg.action_dim], [ActivationKind.TANH] * (len(hidden) + 1), rng.split("actor")
    )
    critic = init_mlp(
        [cfg.state_dim + cfg.action_dim, *hidden, 1],
        [ActivationKind.TANH] * len(hidden) + [ActivationKind.LINEAR],
        rng.split("critic"),
    )
    return AgentNets(actor=actor, critic=critic, target_actor=copy_mlp(actor), target_critic=copy_mlp(critic))


def as_batch(batch: ExperienceBatch | Sequence[Experience]) -> ExperienceBatch:
    return batch if isinstance(batch, ExperienceBatch) else ExperienceBatch.stack(list(batch))


def select_action(nets: AgentNets, s: np.ndarray, noise_std: float, rng: RngStream) -> np.ndarray:
    """``clip(μ(s) + ζ, -1, 1)`` with i.i.d. Gaussian ζ; no draw is made when ``noise_std`` is 0."""
    state = np.asarray(s, dtype=np.float64)
    if state.ndim != 1 or state.shape[0] != nets.state_dim:
        raise DimensionMismatchError("select_action", state.shape, (nets.state_dim,))
    action, _ = forward(nets.actor, state)
    if noise_std > 0.0:
        action = action + noise_std * rng.draw_gaussian(action.shape[0])
    return np.clip(action, -1.0, 1.0)


def critic_value(critic: Mlp, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    values, _ = forward(critic, np.hstack([states, actions]))
    return values[:, 0]


def critic_target(nets: AgentNets, batch: ExperienceBatch | Sequence[Experience], tau_discount: float) -> np.ndarray:
    """``y = r + τ Q'(s', μ'(s'))``; episodes never terminate, so there is no masking."""
    b = as_batch(batch)
    next_actions, _ = forward(nets.target_actor, b.next_states)
    return b.rewards + tau_discount * critic_value(nets.target_critic, b.next_states, next_actions)


def critic_update(
    nets: AgentNets, batch: ExperienceBatch | Sequence[Experience], y: np.ndarray, lambda_q: float
) -> tuple[AgentNets, float]:
    """One SGD step on ``mean((y - Q(s, a))^2)``; returns the nets and the pre-step loss."""
    b = as_batch(batch)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != b.size:
        raise DimensionMismatchError("critic_update", y.shape, (b.size,))
    values, tape = forward(nets.critic, np.hstack([b.states, b.actions]))
    residual = y - values[:, 0]
    loss = float(np.mean(residual**2))
    grads, _ = backward(nets.critic, tape, (-2.0 / b.size * residual)[:, None])
    critic = sgd_step(nets.critic, grads, SgdConfig(learning_rate=lambda_q))
    return nets.model_copy(update={"critic": critic}), loss


def actor_update(
    nets: AgentNets, batch: ExperienceBatch | Sequence[Experience], lambda_mu: float, critic: str = "online"
) -> AgentNets:
    """Deterministic policy gradient step raising the batch-mean ``Q(s, μ(s))``.

    ``critic="target"`` differentiates the target critic instead of the online one.
    """
    b = as_batch(batch)
    scorer = nets.target_critic if critic == "target" else nets.critic
    actions, actor_tape = forward(nets.actor, b.states)
    _, critic_tape = forward(scorer, np.hstack([b.states, actions]))
    # minimise -mean(Q): d(-Q̄)/dQ_v = -1/V
    _, input_grad = backward(scorer, critic_tape, np.full((b.size, 1), -1.0 / b.size))
    grads, _ = backward(nets.actor, actor_tape, input_grad[:, nets.state_dim :])
    actor = sgd_step(nets.actor, grads, SgdConfig(learning_rate=lambda_mu))
    return nets.model_copy(update={"actor": actor})


def soft_update(source: Mlp, target: Mlp, rho: float) -> Mlp:
    """``rho * source + (1 - rho) * target``, parameter by parameter."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"soft_update: rho must lie in [0, 1], got {rho}")
    return blend(source, target, rho)


def update_step(nets: AgentNets, batch: ExperienceBatch, cfg: DdpgConfig) -> tuple[AgentNets, float]:
    """Targets, critic step, actor step and both soft updates for one sampled batch."""
    y = critic_target(nets, batch, cfg.tau_discount)
    nets, loss = critic_update(nets, batch, y, cfg.lambda_q)
    nets = actor_update(nets, batch, cfg.lambda_mu, cfg.actor_gradient_critic)
    nets = nets.model_copy(
        update={
            "target_actor": soft_update(nets.actor, nets.target_actor, cfg.rho_mu),
            "target_critic": soft_update(nets.critic, nets.target_critic, cfg.rho_q),
        }
    )
    return nets, loss


def train(
    nets: AgentNets,
    env: RisEnvironment,
    cfg: DdpgConfig,
    rng: RngStream | int,
    oracle_label: str = "ien",
    relocate: Relocate | None = None,
) -> TrainingResult:
    """Run J episodes of T steps from random feasible starts; updates begin once V experiences are stored.

    The best action is ranked by the true-channel rate when ``env`` carries an evaluator and by
    the reward otherwise.
    """
    rng = as_stream(rng)
    if env.state_dim != nets.state_dim or env.action_dim != nets.action_dim:
        raise DimensionMismatchError(
            "train", (env.state_dim, env.action_dim), (nets.state_dim, nets.action_dim)
        )
    if cfg.randomize_ue_location and relocate is None:
        raise ConfigError("train: randomize_ue_location is set but no relocate callback was given")
    buffer = ReplayBuffer(cfg.buffer_capacity, nets.state_dim, nets.action_dim)
    replay_rng = rng.split("replay")
    steps_counter = agent_steps_counter.labels(oracle=oracle_label)
    rewards: list[float] = []
    best: BestAction | None = None
    updates = 0

    with tracer.start_as_current_span("agent.train") as span:
        span.set_attribute("agent.oracle", oracle_label)
        span.set_attribute("agent.episodes", cfg.episodes_j)
        span.set_attribute("agent.steps", cfg.steps_t)
        for episode in range(cfg.episodes_j):
            ep_rng = rng.split(f"episode-{episode}")
            if cfg.randomize_ue_location:
                env = relocate(ep_rng.split("location"))
            noise_rng = ep_rng.split("noise")
            noise_std = cfg.noise_std(episode)

            state = env.reset(ep_rng.split("init"))
            s = env.observe(state)
            for step in range(cfg.steps_t):
                a = select_action(nets, s, noise_std, noise_rng)
                outcome = env.step(state, a)
                s_next = env.observe(outcome.state)
                buffer.add(Experience(s=s, a=a, r=outcome.reward, s_next=s_next))
                rewards.append(outcome.reward)
                steps_counter.inc()

                score = outcome.true_rate if outcome.true_rate is not None else outcome.reward
                if best is None or score > best.rate:
                    best = BestAction(
                        q=outcome.state.q, theta=outcome.state.theta, rate=score, episode=episode, step=step
                    )

                if len(buffer) >= cfg.batch_v:
                    nets, loss = update_step(nets, buffer.sample(cfg.batch_v, replay_rng), cfg)
                    updates += 1
                    agent_updates_counter.inc()
                    logger.debug("Agent update", episode=episode, step=step, critic_loss=loss)
                state, s = outcome.state, s_next

            episode_rewards = rewards[-cfg.steps_t :]
            logger.info(
                "Episode completed",
                oracle=oracle_label,
                episode=episode,
                mean_reward=float(np.mean(episode_rewards)),
                best_rate=best.rate,
                noise_std=noise_std,
            )
        span.set_attribute("agent.best_rate", best.rate)
        span.set_attribute("agent.updates", updates)
    return TrainingResult(nets=nets, rewards=rewards, best=best, updates=updates)


def evaluate_policy(nets: AgentNets, env: RisEnvironment, steps_t: int, rng: RngStream | int) -> float:
    """Best rate reached by the noiseless actor over ``steps_t`` steps from a seeded start.

    Scored by the true channel when ``env`` has an evaluator, otherwise by its oracle.
    """
    rng = as_stream(rng)
    state = env.reset(rng.split("init"))
    best = env.true_rate(state)
    best = state.rate if best is None else best
    for _ in range(steps_t):
        outcome = env.step(state, select_action(nets, env.observe(state), 0.0, rng))
        score = outcome.true_rate if outcome.true_rate is not None else outcome.reward
        best = max(best, score)
        state = outcome.state
    return float(best)


def random_agent_rewards(env: RisEnvironment, episodes_j: int, steps_t: int, rng: RngStream | int) -> list[float]:
    """Reward log of an agent acting uniformly at random in [-1, 1], same episode structure as :func:`train`."""
    rng = as_stream(rng)
    rewards: list[float] = []
    for episode in range(episodes_j):
        ep_rng = rng.split(f"episode-{episode}")
        action_rng = ep_rng.split("noise")
        state = env.reset(ep_rng.split("init"))
        for _ in range(steps_t):
            outcome = env.step(state, 2.0 * action_rng.draw_uniform(env.action_dim) - 1.0)
            rewards.append(outcome.reward)
            state = outcome.state
    return rewards


def write_reward_log(path: Path, rewards: Sequence[float], steps_t: int, meta: dict[str, Any] | None = None) -> Path:
    """``episode, step, reward, avg_reward`` with the running mean over all steps so far."""
    averages = metric_average_reward(list(rewards))
    rows = [(i // steps_t, i % steps_t, r, avg) for i, (r, avg) in enumerate(zip(rewards, averages))]
    return write_csv(path, ["episode", "step", "reward", "avg_reward"], rows, meta)


def agent_to_dict(nets: AgentNets, cfg: DdpgConfig) -> dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "config": cfg.model_dump(mode="json"),
        "actor": mlp_to_dict(nets.actor),
        "critic": mlp_to_dict(nets.critic),
        "target_actor": mlp_to_dict(nets.target_actor),
        "target_critic": mlp_to_dict(nets.target_critic),
    }


def agent_from_dict(doc: dict[str, Any]) -> tuple[AgentNets, DdpgConfig]:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unsupported agent checkpoint format: {doc.get('format')!r}")
    try:
        nets = AgentNets(**{name: mlp_from_dict(doc[name]) for name in ("actor", "critic", "target_actor", "target_critic")})
        return nets, DdpgConfig.model_validate(doc["config"])
    except KeyError as e:
        raise CheckpointError(f"agent checkpoint is missing field {e}") from None


def save_agent(nets: AgentNets, cfg: DdpgConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(agent_to_dict(nets, cfg)))
    return path


def load_agent(path: Path) -> tuple[AgentNets, DdpgConfig]:
    return agent_from_dict(read_checkpoint(path))
