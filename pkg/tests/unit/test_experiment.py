import numpy as np
import pytest

from ris_lab.config.settings import DEFAULTS_PATH
from ris_lab.core.errors import CheckpointError
from ris_lab.domain.models.scenario import load_scenario
from ris_lab.domain.services.agent import random_agent_rewards
from ris_lab.domain.services.baselines import csi_state_dim
from ris_lab.domain.services.experiment import (
    ExperimentService,
    build_environment,
    build_ien,
    interaction_slots,
    job_coherence,
    job_mse_vs_paths,
    job_rate_vs_elements,
    job_rate_vs_eta,
    measure_eta,
    run_drl,
    scenario_bounds,
    sweep_jobs,
)
from ris_lab.utils.csv_io import read_csv
from ris_lab.utils.metrics import tail_mean
from ris_lab.utils.rng import RngStream


class TestEnvironments:
    def test_oracle_kinds(self, tiny_config):
        model, _, _ = build_ien(tiny_config, 0)
        true_env = build_environment(tiny_config, 0, "true")
        ien_env = build_environment(tiny_config, 0, "ien", ien_model=model)
        csi_env = build_environment(tiny_config, 0, "csi")
        assert true_env.state_dim == ien_env.state_dim == 2 * 4 + 2 * 4 + 10
        assert csi_env.state_dim == csi_state_dim(2, 4, 2)
        start = ien_env.reset(RngStream(1))
        # the IEN oracle scores the reward, the true channel scores the evaluation
        assert ien_env.true_rate(start) == pytest.approx(true_env.reset(RngStream(1)).rate)

    def test_ien_oracle_needs_model(self, tiny_config):
        with pytest.raises(CheckpointError):
            build_environment(tiny_config, 0, "ien")

    def test_minmax_scaling(self, tiny_config):
        cfg = tiny_config.model_copy(
            update={"env": tiny_config.env.model_copy(update={"state_location_scaling": "minmax"})}
        )
        env = build_environment(cfg, 0, "true")
        obs = env.observe(env.reset(RngStream(0)))
        assert np.all(np.abs(obs[-9:]) <= 1.0)

    def test_bounds_cover_devices(self, tiny_config):
        bounds = scenario_bounds(tiny_config)
        assert bounds.low[0] <= 0.0 and bounds.high[1] >= 55.0

    def test_location_error_moves_belief_only(self, tiny_config):
        model, _, _ = build_ien(tiny_config, 0)
        _, env = run_drl(tiny_config, 0, "ien", ien_model=model, eta=0.1)
        assert env.geometry.loc_ue != tiny_config.geometry.loc_ue


class TestPipelines:
    def test_run_drl_is_deterministic(self, tiny_config):
        a, _ = run_drl(tiny_config, 3, "true")
        b, _ = run_drl(tiny_config, 3, "true")
        assert a.rewards == b.rewards
        assert a.best.rate == b.best.rate

    def test_rate_vs_elements_rows(self, tiny_config):
        rows = job_rate_vs_elements(tiny_config, 4, 0)
        assert [r[0] for r in rows] == ["ao", "random", "scheme2_csi", "scheme3_true", "proposed", "proposed"]
        assert [r[2] for r in rows[-2:]] == [0.0, 0.1]
        assert all(r[4] >= 0.0 for r in rows)

    def test_coherence_rows(self, tiny_config):
        rows = job_coherence(tiny_config, 0)
        # the configured T_c joins the sweep grid
        assert len(rows) == 6
        assert sorted({r[1] for r in rows}) == [1000, tiny_config.coherence_time_tc, 20000]
        proposed = [r for r in rows if r[0] == "proposed"]
        assert all(r[4] == r[3] for r in proposed)
        short = next(r for r in rows if r[0] == "scheme3_true" and r[1] == 1000)
        assert short[4] == 0.0

    def test_measured_eta(self, tiny_config):
        cfg = tiny_config.model_copy(
            update={"sweep": tiny_config.sweep.model_copy(update={"eta_estimation_samples": 500})}
        )
        assert measure_eta(cfg, 0.0, 0) == 0.0
        assert measure_eta(cfg, 0.1, 0) == pytest.approx(0.1, rel=0.05)

    def test_sweep_job_grid(self, tiny_config):
        assert [job.key for job in sweep_jobs(tiny_config, "paths")] == [(4, 1, 0), (4, 2, 0)]
        assert len(sweep_jobs(tiny_config, "ris-elements")) == 1
        with pytest.raises(ValueError):
            sweep_jobs(tiny_config, "bogus")


class TestExperimentService:
    def test_dataset_then_training(self, tiny_config, tmp_path):
        service = ExperimentService(tiny_config, tmp_path)
        dataset = service.gen_dataset()
        meta, rows = read_csv(dataset)
        assert len(rows) == 4
        assert meta["seed"] == "0" and len(meta["config_sha256"]) == 64

        trace = service.train_ien()
        _, epochs = read_csv(trace)
        assert [r["epoch"] for r in epochs] == ["0", "1"]
        assert (tmp_path / "ien.json").exists()

        log = service.train_drl("ien")
        _, steps = read_csv(log)
        assert len(steps) == 4
        assert (tmp_path / "agent_ien.json").exists()

    def test_reward_log_header_carries_average_rate(self, tiny_config, tmp_path):
        meta, _ = read_csv(ExperimentService(tiny_config, tmp_path).train_drl("true"))
        t_c, t = tiny_config.coherence_time_tc, tiny_config.interaction_slots_t
        assert meta["t_c"] == str(t_c) and meta["t_interact"] == str(t)
        assert float(meta["avg_rate"]) == pytest.approx((t_c - t) / t_c * float(meta["best_rate"]))

    def test_interaction_slots(self, tiny_config):
        assert interaction_slots(tiny_config, "ien") == 0
        assert interaction_slots(tiny_config, "true") == tiny_config.interaction_slots_t

    def test_train_drl_without_checkpoint(self, tiny_config, tmp_path):
        with pytest.raises(CheckpointError):
            ExperimentService(tiny_config, tmp_path).train_drl("ien")

    def test_baselines(self, tiny_config, tmp_path):
        service = ExperimentService(tiny_config, tmp_path)
        _, ao_rows = read_csv(service.baseline_ao())
        _, random_rows = read_csv(service.baseline_random())
        assert ao_rows[0]["scheme"] == "ao"
        assert [r["scheme"] for r in random_rows] == ["random_mean", "random_best"]
        assert float(random_rows[1]["rate"]) >= float(random_rows[0]["rate"])

    @pytest.mark.asyncio
    async def test_sweep_writes_rows(self, tiny_config, tmp_path):
        path = await ExperimentService(tiny_config, tmp_path).sweep("paths")
        _, rows = read_csv(path)
        assert [(r["n"], r["paths"]) for r in rows] == [("4", "1"), ("4", "2")]
        assert all(float(r["mse"]) >= 0.0 for r in rows)


TREND_OVERRIDES = [
    "arrays.n_x=4",
    "arrays.n_y=4",
    "ien.dataset.u_locations=60",
    "ien.dataset.f_thetas_per_location=5",
    "ien.training.epochs=30",
    "ien.training.hidden_dims=[32,16]",
    "ddpg.hidden_dims=[64,32]",
    "ddpg.lambda_q=0.01",
    "ddpg.lambda_mu=0.01",
    "ddpg.rho_mu=0.01",
    "ddpg.rho_q=0.01",
    "ddpg.buffer_capacity=2000",
    "ddpg.episodes_j=30",
    "ddpg.steps_t=20",
    "ddpg.noise_decay=0.95",
    "sweep.etas=[0.0,0.1]",
    "sweep.eta_estimation_samples=100",
]
TREND_SEEDS = (0, 1, 2)


@pytest.mark.slow
class TestAcceptanceTrends:
    @pytest.fixture(scope="class")
    def trend_config(self):
        return load_scenario(DEFAULTS_PATH, list(TREND_OVERRIDES))

    def test_ien_mse_grows_with_paths(self, trend_config):
        n = trend_config.arrays.n

        def mean_mse(paths):
            return float(np.mean([job_mse_vs_paths(trend_config, n, paths, seed)[0][3] for seed in TREND_SEEDS]))

        assert mean_mse(1) < mean_mse(4)

    def test_trained_agent_beats_random_actions(self, trend_config):
        ddpg = trend_config.ddpg
        trained, random = [], []
        for seed in TREND_SEEDS:
            result, env = run_drl(trend_config, seed, "true")
            trained.append(tail_mean(result.rewards))
            random.append(float(np.mean(random_agent_rewards(env, ddpg.episodes_j, ddpg.steps_t, RngStream(seed)))))
        assert np.mean(trained) >= 1.2 * np.mean(random)

    def test_true_oracle_scores_at_least_the_ien_oracle(self, trend_config):
        true_rates, ien_rates = [], []
        for seed in TREND_SEEDS:
            model, _, _ = build_ien(trend_config, seed)
            true_rates.append(run_drl(trend_config, seed, "true")[0].best.rate)
            ien_rates.append(run_drl(trend_config, seed, "ien", ien_model=model)[0].best.rate)
        assert np.mean(true_rates) >= np.mean(ien_rates)

    def test_rate_does_not_improve_with_location_error(self, trend_config):
        by_eta: dict[float, list[float]] = {}
        for seed in TREND_SEEDS:
            for eta, _, _, rate in job_rate_vs_eta(trend_config, seed):
                by_eta.setdefault(eta, []).append(rate)
        assert np.mean(by_eta[0.1]) <= np.mean(by_eta[0.0])
