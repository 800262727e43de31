"""End-to-end pipelines behind the CLI subcommands and the figure sweeps.

Every pipeline is a pure function of ``(ScenarioConfig, seed)``: the channel phases come from
``channel_stream(seed)`` and every learner draws from a labelled child of ``RngStream(seed)``.
Sweep jobs are module-level functions so they can run in worker processes.
"""

from pathlib import Path
from typing import Any, Literal

import structlog

from ris_lab.core.errors import CheckpointError
from ris_lab.core.observability import tracer
from ris_lab.domain.models.agent import TrainingResult
from ris_lab.domain.models.geometry import ArrayConfig, BoundingBox
from ris_lab.domain.models.ien import IenModel, IenSample
from ris_lab.domain.models.network import SgdConfig
from ris_lab.domain.models.scenario import ScenarioConfig, config_hash
from ris_lab.domain.services.agent import evaluate_policy, init_agent_nets, save_agent, train, write_reward_log
from ris_lab.domain.services.base import BaseJobRunner, JobSpec
from ris_lab.domain.services.baselines import (
    ao_optimize,
    csi_state_dim,
    csi_state_encoder,
    random_phase_baseline,
)
from ris_lab.domain.services.channel import channel_stream, true_channels, write_channel_fixture
from ris_lab.domain.services.environment import (
    RisEnvironment,
    TrueChannelOracle,
    location_error_ratio,
    location_state_encoder,
    perturb_location,
)
from ris_lab.domain.services.ien import (
    IenChannelOracle,
    generate_ien_dataset,
    ien_model_for_dataset,
    load_ien,
    read_ien_dataset,
    save_ien,
    train_ien,
    write_ien_dataset,
)
from ris_lab.utils.csv_io import write_csv
from ris_lab.utils.metrics import metric_avg_achievable_rate, tail_mean
from ris_lab.utils.rng import RngStream

OracleKind = Literal["ien", "true", "csi"]
SweepAxis = Literal["ris-elements", "paths", "eta", "coherence"]

BASELINE_HEADER = ["scheme", "n", "eta", "seed", "rate", "sweeps_or_steps"]

logger = structlog.get_logger()


def scenario_bounds(cfg: ScenarioConfig) -> BoundingBox:
    """Box around the BS, the RIS and the UE movement disc."""
    area = cfg.geometry.ue_area
    cx, cy, cz = area.center
    corners = [(cx - area.radius, cy - area.radius, cz), (cx + area.radius, cy + area.radius, cz)]
    return BoundingBox.around([cfg.geometry.loc_bs, cfg.geometry.loc_ris, *corners])


def arrays_for(cfg: ScenarioConfig, n: int | None) -> ArrayConfig:
    if n is None:
        return cfg.arrays
    return ArrayConfig.with_elements(n, cfg.arrays.m_bs, cfg.arrays.k_ue)


def build_ien(
    cfg: ScenarioConfig, seed: int, arrays: ArrayConfig | None = None, ris_ue_paths: int | None = None
) -> tuple[IenModel, list[float], list[IenSample]]:
    """Dataset generation followed by IEN training."""
    arrays = arrays or cfg.arrays
    geom_base = cfg.geometry.scenario_geometry(ris_ue_paths=ris_ue_paths)
    samples = generate_ien_dataset(geom_base, arrays, cfg.path_loss, cfg.ien.dataset, cfg.geometry.ue_area, seed)
    return (*fit_ien(cfg, seed, arrays, samples), samples)


def fit_ien(cfg: ScenarioConfig, seed: int, arrays: ArrayConfig, samples: list[IenSample]) -> tuple[IenModel, list[float]]:
    training = cfg.ien.training
    model = ien_model_for_dataset(arrays, samples, RngStream(seed).split("ien-init"), training.hidden_dims)
    return train_ien(
        model,
        samples,
        training.epochs,
        training.batch_v,
        SgdConfig(learning_rate=training.learning_rate),
        RngStream(seed).split("ien-train"),
    )


def build_environment(
    cfg: ScenarioConfig,
    seed: int,
    oracle: OracleKind,
    arrays: ArrayConfig | None = None,
    ien_model: IenModel | None = None,
    loc_ue=None,
    believed_loc_ue=None,
) -> RisEnvironment:
    """Environment for one agent.

    The true channel at ``loc_ue`` always scores actions (evaluator). The agent observes
    ``believed_loc_ue`` (defaults to the true location), and the IEN oracle is queried there.
    """
    arrays = arrays or cfg.arrays
    geom_true = cfg.geometry.scenario_geometry(loc_ue=loc_ue)
    geom_belief = geom_true if believed_loc_ue is None else geom_true.with_ue(believed_loc_ue)
    truth = TrueChannelOracle(true_channels(geom_true, arrays, cfg.path_loss, seed))
    m, n = arrays.m_bs, arrays.n

    if oracle == "csi":
        return RisEnvironment(
            geom_true,
            m,
            n,
            cfg.env,
            truth,
            evaluator=truth,
            state_encoder=csi_state_encoder(truth.pair),
            state_dim=csi_state_dim(m, n, arrays.k_ue),
        )
    bounds = scenario_bounds(cfg) if cfg.env.state_location_scaling == "minmax" else None
    encoder = location_state_encoder(bounds)
    if oracle == "true":
        return RisEnvironment(geom_belief, m, n, cfg.env, truth, evaluator=truth, state_encoder=encoder)
    if ien_model is None:
        raise CheckpointError("the IEN oracle needs a trained IEN model")
    return RisEnvironment(
        geom_belief, m, n, cfg.env, IenChannelOracle(ien_model, geom_belief), evaluator=truth, state_encoder=encoder
    )


def run_drl(
    cfg: ScenarioConfig,
    seed: int,
    oracle: OracleKind,
    arrays: ArrayConfig | None = None,
    ien_model: IenModel | None = None,
    eta: float = 0.0,
) -> tuple[TrainingResult, RisEnvironment]:
    """Train one agent; with ``eta > 0`` the agent and the IEN see a perturbed UE location."""
    root = RngStream(seed)
    area = cfg.geometry.ue_area

    def believed(loc_ue, rng: RngStream):
        return None if eta == 0.0 else perturb_location(loc_ue, eta, area, rng)

    env = build_environment(
        cfg, seed, oracle, arrays, ien_model, believed_loc_ue=believed(cfg.geometry.loc_ue, root.split("perturb"))
    )

    def relocate(rng: RngStream) -> RisEnvironment:
        loc_ue = rng.draw_in_disc(area.center, area.radius)
        return build_environment(
            cfg, seed, oracle, arrays, ien_model, loc_ue=loc_ue, believed_loc_ue=believed(loc_ue, rng.split("perturb"))
        )

    ddpg = cfg.ddpg.with_dims(env.state_dim, env.action_dim)
    nets = init_agent_nets(ddpg, root.split("agent-init"))
    result = train(nets, env, ddpg, root.split("agent-train"), oracle_label=oracle, relocate=relocate)
    return result, env


def evaluation_env(cfg: ScenarioConfig, seed: int, env: RisEnvironment, arrays: ArrayConfig | None = None) -> RisEnvironment:
    """The same observation pipeline as ``env`` but driven by the true channel."""
    arrays = arrays or cfg.arrays
    truth = TrueChannelOracle(true_channels(cfg.geometry.scenario_geometry(), arrays, cfg.path_loss, seed))
    return RisEnvironment(
        env.geometry,
        env.m,
        env.n,
        env.env,
        truth,
        evaluator=truth,
        state_encoder=env.state_encoder,
        state_dim=env.state_dim,
    )


def job_mse_vs_paths(cfg: ScenarioConfig, n: int, paths: int, seed: int) -> list[tuple]:
    _, trace, _ = build_ien(cfg, seed, arrays_for(cfg, n), ris_ue_paths=paths)
    return [(n, paths, seed, trace[-1] if trace else float("nan"))]


def job_rate_vs_elements(cfg: ScenarioConfig, n: int, seed: int) -> list[tuple]:
    """AO, random phases, the CSI and true-channel agents, and the IEN agent at every configured η."""
    arrays = arrays_for(cfg, n)
    root = RngStream(seed)
    pair = true_channels(cfg.geometry.scenario_geometry(), arrays, cfg.path_loss, seed)
    ao = ao_optimize(pair, cfg.env, cfg.ao, root.split("ao"))
    rnd = random_phase_baseline(pair, cfg.env, cfg.random_trials, root.split("random"))
    rows = [("ao", n, 0.0, seed, ao.rate, ao.sweeps), ("random", n, 0.0, seed, rnd.best_rate, rnd.trials)]

    steps = cfg.ddpg.episodes_j * cfg.ddpg.steps_t
    for scheme, oracle in (("scheme2_csi", "csi"), ("scheme3_true", "true")):
        result, _ = run_drl(cfg, seed, oracle, arrays)
        rows.append((scheme, n, 0.0, seed, result.best.rate, steps))

    model, _, _ = build_ien(cfg, seed, arrays)
    for eta in cfg.sweep.etas:
        result, _ = run_drl(cfg, seed, "ien", arrays, model, eta=eta)
        rows.append(("proposed", n, eta, seed, result.best.rate, steps))
    return rows


def measure_eta(cfg: ScenarioConfig, eta: float, seed: int) -> float:
    """Empirical normalized location error of :func:`perturb_location` over the movement disc."""
    rng = RngStream(seed).split(f"eta-estimate-{eta!r}")
    area = cfg.geometry.ue_area
    us = [rng.draw_in_disc(area.center, area.radius) for _ in range(cfg.sweep.eta_estimation_samples)]
    u_hats = [perturb_location(u, eta, area, rng) for u in us]
    return location_error_ratio(us, u_hats)


def job_rate_vs_eta(cfg: ScenarioConfig, seed: int) -> list[tuple]:
    model, _, _ = build_ien(cfg, seed)
    rows = []
    for eta in cfg.sweep.etas:
        result, env = run_drl(cfg, seed, "ien", ien_model=model, eta=eta)
        rate = evaluate_policy(result.nets, evaluation_env(cfg, seed, env), cfg.ddpg.steps_t, RngStream(seed).split("eval"))
        rows.append((eta, measure_eta(cfg, eta, seed), seed, rate))
    return rows


def interaction_slots(cfg: ScenarioConfig, oracle: OracleKind) -> int:
    """Slots spent interacting with the real channel before the learned configuration is used."""
    return 0 if oracle == "ien" else cfg.interaction_slots_t


def job_coherence(cfg: ScenarioConfig, seed: int) -> list[tuple]:
    """Average rate over T_c of the IEN agent (no interaction slots) and the true-channel agent."""
    model, _, _ = build_ien(cfg, seed)
    proposed, _ = run_drl(cfg, seed, "ien", ien_model=model, eta=cfg.eta)
    scheme3, _ = run_drl(cfg, seed, "true")
    rows = []
    t = interaction_slots(cfg, "true")
    for t_c in sorted({*cfg.sweep.coherence_times, cfg.coherence_time_tc}):
        rows.append(("proposed", t_c, 0, proposed.best.rate, metric_avg_achievable_rate(proposed.best.rate, 0, t_c)))
        rows.append(("scheme3_true", t_c, t, scheme3.best.rate, metric_avg_achievable_rate(scheme3.best.rate, t, t_c)))
    return rows


SWEEP_FILES: dict[str, tuple[str, list[str]]] = {
    "paths": ("fig_mse_vs_paths.csv", ["n", "paths", "seed", "mse"]),
    "ris-elements": ("fig_rate_vs_elements.csv", BASELINE_HEADER),
    "eta": ("fig_rate_vs_eta.csv", ["eta", "measured_eta", "seed", "rate"]),
    "coherence": ("fig_avg_rate_vs_coherence.csv", ["scheme", "t_c", "t_interact", "rate", "avg_rate"]),
}


def sweep_jobs(cfg: ScenarioConfig, axis: SweepAxis) -> list[JobSpec]:
    sweep = cfg.sweep
    if axis == "paths":
        return [
            JobSpec(key=(n, paths, seed), func=job_mse_vs_paths, kwargs={"cfg": cfg, "n": n, "paths": paths, "seed": seed})
            for n in sweep.ris_elements
            for paths in sweep.paths
            for seed in sweep.seeds
        ]
    if axis == "ris-elements":
        return [
            JobSpec(key=(n, seed), func=job_rate_vs_elements, kwargs={"cfg": cfg, "n": n, "seed": seed})
            for n in sweep.ris_elements
            for seed in sweep.seeds
        ]
    if axis == "eta":
        return [JobSpec(key=(seed,), func=job_rate_vs_eta, kwargs={"cfg": cfg, "seed": seed}) for seed in sweep.seeds]
    if axis == "coherence":
        return [JobSpec(key=(cfg.seed,), func=job_coherence, kwargs={"cfg": cfg, "seed": cfg.seed})]
    raise ValueError(f"unknown sweep axis: {axis!r}")


class ExperimentService:
    """Runs the CLI subcommands for one scenario and writes their artifacts under ``output_dir``."""

    def __init__(self, config: ScenarioConfig, output_dir: Path, jobs: int = 1) -> None:
        self.config = config
        self.output_dir = Path(output_dir)
        self.jobs = jobs
        self.logger = structlog.get_logger()
        self.logger.info("ExperimentService initialized", output_dir=str(self.output_dir), seed=config.seed, jobs=jobs)

    @property
    def meta(self) -> dict[str, Any]:
        return {"seed": self.config.seed, "config_sha256": config_hash(self.config)}

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def gen_dataset(self) -> Path:
        cfg = self.config
        with tracer.start_as_current_span("experiment.gen_dataset"):
            samples = generate_ien_dataset(
                cfg.geometry.scenario_geometry(), cfg.arrays, cfg.path_loss, cfg.ien.dataset, cfg.geometry.ue_area, cfg.seed
            )
            return write_ien_dataset(self.path("ien_dataset.csv"), samples, self.meta)

    def train_ien(self) -> Path:
        """Train on ``ien_dataset.csv`` when present, otherwise on a freshly generated dataset."""
        cfg = self.config
        dataset_path = self.path("ien_dataset.csv")
        if dataset_path.exists():
            samples = read_ien_dataset(dataset_path, cfg.arrays.k_ue)
            self.logger.info("Loaded IEN dataset", path=str(dataset_path), samples=len(samples))
            model, trace = fit_ien(cfg, cfg.seed, cfg.arrays, samples)
        else:
            model, trace, _ = build_ien(cfg, cfg.seed)
        save_ien(model, self.path("ien.json"))
        return write_csv(self.path("mse_trace.csv"), ["epoch", "mse"], enumerate(trace), self.meta)

    def load_ien_checkpoint(self) -> IenModel:
        path = self.path("ien.json")
        if not path.exists():
            raise CheckpointError(f"IEN checkpoint {path} not found; run train-ien first")
        return load_ien(path)

    def train_drl(self, oracle: OracleKind) -> Path:
        cfg = self.config
        model = self.load_ien_checkpoint() if oracle == "ien" else None
        result, env = run_drl(cfg, cfg.seed, oracle, ien_model=model, eta=cfg.eta)
        save_agent(result.nets, cfg.ddpg.with_dims(env.state_dim, env.action_dim), self.path(f"agent_{oracle}.json"))
        t_interact = interaction_slots(cfg, oracle)
        avg_rate = metric_avg_achievable_rate(result.best.rate, t_interact, cfg.coherence_time_tc)
        self.logger.info(
            "DRL training finished",
            oracle=oracle,
            best_rate=result.best.rate,
            avg_rate=avg_rate,
            final_reward=tail_mean(result.rewards),
            updates=result.updates,
        )
        meta = {
            **self.meta,
            "best_rate": result.best.rate,
            "t_c": cfg.coherence_time_tc,
            "t_interact": t_interact,
            "avg_rate": avg_rate,
        }
        return write_reward_log(self.path(f"reward_log_{oracle}.csv"), result.rewards, cfg.ddpg.steps_t, meta)

    def baseline_ao(self) -> Path:
        cfg = self.config
        pair = true_channels(cfg.geometry.scenario_geometry(), cfg.arrays, cfg.path_loss, cfg.seed)
        ao = ao_optimize(pair, cfg.env, cfg.ao, RngStream(cfg.seed).split("ao"))
        rows = [("ao", cfg.arrays.n, 0.0, cfg.seed, ao.rate, ao.sweeps)]
        return write_csv(self.path("baseline_ao.csv"), BASELINE_HEADER, rows, self.meta)

    def baseline_random(self) -> Path:
        cfg = self.config
        pair = true_channels(cfg.geometry.scenario_geometry(), cfg.arrays, cfg.path_loss, cfg.seed)
        rnd = random_phase_baseline(pair, cfg.env, cfg.random_trials, RngStream(cfg.seed).split("random"))
        rows = [
            ("random_mean", cfg.arrays.n, 0.0, cfg.seed, rnd.mean_rate, rnd.trials),
            ("random_best", cfg.arrays.n, 0.0, cfg.seed, rnd.best_rate, rnd.trials),
        ]
        return write_csv(self.path("baseline_random.csv"), BASELINE_HEADER, rows, self.meta)

    def channel_fixture(self) -> Path:
        cfg = self.config
        return write_channel_fixture(
            self.path("channel_fixture.csv"),
            cfg.geometry.scenario_geometry(),
            cfg.arrays,
            cfg.path_loss,
            channel_stream(cfg.seed),
            self.meta,
        )

    async def sweep(self, axis: SweepAxis) -> Path:
        name, header = SWEEP_FILES[axis]
        with tracer.start_as_current_span("experiment.sweep") as span:
            span.set_attribute("sweep.axis", axis)
            runner: BaseJobRunner[list[tuple]] = BaseJobRunner(kind=f"sweep-{axis}", max_concurrent=self.jobs)
            results = await runner.run_batch(sweep_jobs(self.config, axis))
            rows = [row for job_rows in results for row in job_rows]
            span.set_attribute("sweep.rows", len(rows))
        return write_csv(self.path(name), header, rows, self.meta)

