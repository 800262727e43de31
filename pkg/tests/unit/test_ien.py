import numpy as np
import pytest

from ris_lab.core.errors import CheckpointError, DimensionMismatchError
from ris_lab.domain.models.geometry import ArrayConfig, BoundingBox, MovementArea
from ris_lab.domain.models.ien import IenDatasetConfig, IenModel
from ris_lab.domain.models.network import DenseLayer, Mlp, SgdConfig
from ris_lab.domain.services.channel import composite_channel, true_channels
from ris_lab.domain.services.environment import achievable_rate, random_feasible
from ris_lab.domain.services.ien import (
    IenChannelOracle,
    dataset_output_scale,
    generate_ien_dataset,
    ien_backward,
    ien_model_for_dataset,
    ien_mse,
    ien_predict,
    ien_predicted_rate,
    ien_training_mse,
    init_ien_model,
    load_ien,
    read_ien_dataset,
    save_ien,
    train_ien,
    write_ien_dataset,
)
from ris_lab.domain.services.network import init_mlp
from ris_lab.utils.linalg import complex_to_realvec
from ris_lab.utils.rng import RngStream
from tests.conftest import assert_gradient_matches, central_difference, entry_at, parameter_sites


@pytest.fixture
def bounds(reference_geometry):
    return BoundingBox.around([reference_geometry.loc_bs, reference_geometry.loc_ris, (5.0, 45.0, 0.0), (15.0, 55.0, 0.0)])


@pytest.fixture
def model(small_arrays, bounds):
    return init_ien_model(small_arrays, bounds, 3, output_scale=4.0, hidden_dims=(8,))


def _constant_net(out: np.ndarray) -> Mlp:
    hidden = DenseLayer(weights=np.zeros((3, 6)), biases=np.zeros(3), activation="tanh")
    head = DenseLayer(weights=np.zeros((out.shape[0], 3)), biases=out, activation="linear")
    return Mlp(layers=[hidden, head])


def _loss(model, geom, theta, label):
    _, _, h_hat = ien_predict(model, geom, theta)
    return float(np.sum(np.abs(h_hat - label) ** 2))


class TestPrediction:
    def test_shapes(self, model, reference_geometry):
        g, h_r, h = ien_predict(model, reference_geometry, np.ones(4))
        assert g.shape == (4, 2) and h_r.shape == (2, 4) and h.shape == (2, 2)

    def test_composite_is_product(self, model, reference_geometry):
        theta = RngStream(1).draw_unit_modulus(4)
        g, h_r, h = ien_predict(model, reference_geometry, theta)
        np.testing.assert_allclose(h, h_r @ np.diag(theta) @ g, atol=1e-14)

    def test_wrong_theta_length(self, model, reference_geometry):
        with pytest.raises(DimensionMismatchError):
            ien_predict(model, reference_geometry, np.ones(5))

    def test_exact_model_reproduces_true_rate(self, reference_geometry, small_arrays, path_loss, bounds, env_config):
        pair = true_channels(reference_geometry, small_arrays, path_loss, 0)
        exact = IenModel(
            bs_ris_net=_constant_net(complex_to_realvec(pair.g)),
            ris_ue_net=_constant_net(complex_to_realvec(pair.h_r)),
            arrays=small_arrays,
            coord_bounds=bounds,
        )
        q, theta = random_feasible(2, 4, env_config.power_budget_p, RngStream(6))
        true_rate = achievable_rate(composite_channel(pair, theta.theta), q, env_config.noise_power_sigma2)
        predicted = ien_predicted_rate(exact, reference_geometry, theta, q, env_config.noise_power_sigma2)
        assert abs(predicted - true_rate) < 1e-6

    def test_oracle_matches_predict(self, model, reference_geometry):
        theta = RngStream(2).draw_unit_modulus(4)
        oracle = IenChannelOracle(model, reference_geometry)
        np.testing.assert_allclose(oracle(theta), ien_predict(model, reference_geometry, theta)[2], atol=1e-14)

    def test_rejects_wrong_head(self, small_arrays, bounds):
        good = init_mlp([6, 8, 16], ["tanh", "linear"], 0)
        bad = init_mlp([6, 8, 10], ["tanh", "linear"], 0)
        with pytest.raises(ValueError):
            IenModel(bs_ris_net=bad, ris_ue_net=good, arrays=small_arrays, coord_bounds=bounds)


class TestMse:
    def test_known_value(self):
        assert ien_mse([np.zeros((1, 1)), np.ones((1, 1))], [np.ones((1, 1)), np.ones((1, 1))]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ien_mse([np.zeros((1, 1))], [])

    def test_empty(self):
        with pytest.raises(ValueError):
            ien_mse([], [])


class TestBackward:
    @pytest.fixture
    def tiny_model(self, bounds):
        arrays = ArrayConfig(m_bs=2, k_ue=2, n_x=2, n_y=1)
        return init_ien_model(arrays, bounds, 8, output_scale=2.0, hidden_dims=(4, 3))

    @pytest.mark.parametrize("attr", ["bs_ris_net", "ris_ue_net"])
    def test_every_parameter_matches_finite_differences(self, tiny_model, reference_geometry, attr):
        theta = RngStream(4).draw_unit_modulus(2)
        label = RngStream(5).draw_complex_gaussian((2, 2))
        grads = ien_backward(tiny_model, reference_geometry, theta, label)
        net_grads = grads.bs_ris if attr == "bs_ris_net" else grads.ris_ue
        net = getattr(tiny_model, attr)

        def loss(candidate):
            return _loss(tiny_model.model_copy(update={attr: candidate}), reference_geometry, theta, label)

        for site in parameter_sites(net):
            assert_gradient_matches(central_difference(loss, net, site), entry_at(net_grads, site))

    def test_default_model_head(self, model, reference_geometry):
        theta = RngStream(6).draw_unit_modulus(4)
        label = RngStream(7).draw_complex_gaussian((2, 2))
        grads = ien_backward(model, reference_geometry, theta, label)

        def loss(candidate):
            return _loss(model.model_copy(update={"ris_ue_net": candidate}), reference_geometry, theta, label)

        for site in parameter_sites(model.ris_ue_net):
            assert_gradient_matches(central_difference(loss, model.ris_ue_net, site), entry_at(grads.ris_ue, site))

    def test_label_shape_checked(self, model, reference_geometry):
        with pytest.raises(DimensionMismatchError):
            ien_backward(model, reference_geometry, np.ones(4), np.zeros((2, 3)))


class TestDataset:
    @pytest.fixture
    def dataset_cfg(self):
        return IenDatasetConfig(u_locations=3, f_thetas_per_location=2, rng_seed=9)

    def test_size_and_area(self, reference_geometry, small_arrays, path_loss, dataset_cfg):
        area = MovementArea()
        samples = generate_ien_dataset(reference_geometry, small_arrays, path_loss, dataset_cfg, area)
        assert len(samples) == 6
        for s in samples:
            assert np.hypot(s.loc_ue[0] - 10.0, s.loc_ue[1] - 50.0) <= area.radius + 1e-9
            assert s.matches(small_arrays)
        assert samples[0].loc_ue == samples[1].loc_ue
        assert samples[0].loc_ue != samples[2].loc_ue

    def test_labels_are_true_channels(self, reference_geometry, small_arrays, path_loss, dataset_cfg):
        samples = generate_ien_dataset(reference_geometry, small_arrays, path_loss, dataset_cfg, channel_seed=4)
        s = samples[3]
        pair = true_channels(reference_geometry.with_ue(s.loc_ue), small_arrays, path_loss, 4)
        np.testing.assert_allclose(s.label, composite_channel(pair, s.theta.theta), atol=1e-15)

    def test_noise_perturbs_labels(self, reference_geometry, small_arrays, path_loss, dataset_cfg):
        clean = generate_ien_dataset(reference_geometry, small_arrays, path_loss, dataset_cfg)
        noisy_cfg = dataset_cfg.model_copy(update={"label_noise_std": 1e-4})
        noisy = generate_ien_dataset(reference_geometry, small_arrays, path_loss, noisy_cfg)
        np.testing.assert_array_equal(clean[0].theta.theta, noisy[0].theta.theta)
        assert not np.allclose(clean[0].label, noisy[0].label)

    def test_deterministic(self, reference_geometry, small_arrays, path_loss, dataset_cfg):
        a = generate_ien_dataset(reference_geometry, small_arrays, path_loss, dataset_cfg)
        b = generate_ien_dataset(reference_geometry, small_arrays, path_loss, dataset_cfg)
        np.testing.assert_array_equal(a[-1].label, b[-1].label)

    def test_csv_file(self, reference_geometry, small_arrays, path_loss, dataset_cfg, tmp_path):
        samples = generate_ien_dataset(reference_geometry, small_arrays, path_loss, dataset_cfg)
        path = write_ien_dataset(tmp_path / "ien_dataset.csv", samples, {"seed": 9})
        loaded = read_ien_dataset(path, small_arrays.k_ue)
        assert len(loaded) == len(samples)
        np.testing.assert_array_equal(loaded[4].label, samples[4].label)
        assert loaded[4].loc_ue == samples[4].loc_ue

    def test_output_scale_is_label_rms(self, reference_geometry, small_arrays, path_loss, dataset_cfg):
        samples = generate_ien_dataset(reference_geometry, small_arrays, path_loss, dataset_cfg)
        labels = np.stack([s.label for s in samples])
        assert dataset_output_scale(samples) == pytest.approx(np.sqrt(np.mean(np.abs(labels) ** 2)))


class TestTraining:
    @pytest.fixture
    def samples(self, reference_geometry, small_arrays, path_loss):
        cfg = IenDatasetConfig(u_locations=1, f_thetas_per_location=8, rng_seed=2)
        return generate_ien_dataset(reference_geometry, small_arrays, path_loss, cfg)

    def test_training_reduces_mse(self, small_arrays, samples):
        model = ien_model_for_dataset(small_arrays, samples, 1, hidden_dims=(16, 8))
        before = ien_training_mse(model, samples)
        trained, trace = train_ien(model, samples, 400, 4, SgdConfig(learning_rate=0.05), 1)
        assert len(trace) == 400
        assert trace[-1] == pytest.approx(ien_training_mse(trained, samples))
        assert trace[-1] < 0.25 * before

    def test_single_sample_is_fitted(self, reference_geometry, small_arrays, path_loss):
        cfg = IenDatasetConfig(u_locations=1, f_thetas_per_location=1, rng_seed=3)
        sample = generate_ien_dataset(reference_geometry, small_arrays, path_loss, cfg)
        model = ien_model_for_dataset(small_arrays, sample, 2, hidden_dims=(16, 8))
        _, trace = train_ien(model, sample, 2000, 1, SgdConfig(learning_rate=0.02), 0)
        assert trace[-1] < 1e-3

    def test_deterministic(self, small_arrays, samples):
        model = ien_model_for_dataset(small_arrays, samples, 1, hidden_dims=(8,))
        _, a = train_ien(model, samples, 5, 3, SgdConfig(learning_rate=0.01), 7)
        _, b = train_ien(model, samples, 5, 3, SgdConfig(learning_rate=0.01), 7)
        assert a == b

    def test_zero_epochs(self, small_arrays, samples):
        model = ien_model_for_dataset(small_arrays, samples, 1, hidden_dims=(8,))
        trained, trace = train_ien(model, samples, 0, 4, SgdConfig(), 0)
        assert trace == [] and trained is model

    def test_empty_dataset(self, model):
        with pytest.raises(ValueError):
            train_ien(model, [], 1, 4, SgdConfig())


class TestCheckpoint:
    def test_save_and_load(self, model, reference_geometry, tmp_path):
        path = save_ien(model, tmp_path / "ien.json")
        loaded = load_ien(path)
        assert loaded.output_scale == model.output_scale
        theta = RngStream(3).draw_unit_modulus(4)
        np.testing.assert_array_equal(
            ien_predict(loaded, reference_geometry, theta)[2], ien_predict(model, reference_geometry, theta)[2]
        )

    def test_wrong_format(self, tmp_path):
        path = tmp_path / "agent.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(CheckpointError):
            load_ien(path)
