import numpy as np
import pytest

from ris_lab.core.errors import CheckpointError, DimensionMismatchError
from ris_lab.domain.models.network import ActivationKind, DenseLayer, LayerGrads, Mlp, MlpGrads, SgdConfig
from ris_lab.domain.services.network import (
    backward,
    blend,
    copy_mlp,
    forward,
    init_mlp,
    load_mlp,
    save_mlp,
    sgd_step,
    zero_like,
)
from ris_lab.utils.rng import RngStream
from tests.conftest import assert_gradient_matches, central_difference, entry_at, parameter_sites

IEN_LAYOUT = ["tanh", "tanh", "linear"]
ACTOR_LAYOUT = ["tanh", "tanh", "tanh"]


@pytest.fixture
def net():
    return init_mlp([3, 5, 2], ["tanh", "linear"], 11)


def _loss(net, x, target):
    y, _ = forward(net, x)
    return 0.5 * float(np.sum((y - target) ** 2))


def _grads_like(net, fill):
    return MlpGrads(layers=[LayerGrads(weights=fill(layer.weights), biases=fill(layer.biases)) for layer in net.layers])


def _check_every_parameter(net, x, target, per_array=None, rng=None):
    y, tape = forward(net, x)
    grads, _ = backward(net, tape, y - target)
    for site in parameter_sites(net, per_array, rng):
        numeric = central_difference(lambda n: _loss(n, x, target), net, site)
        assert_gradient_matches(numeric, entry_at(grads, site))


class TestInit:
    def test_dims_and_activations(self, net):
        assert net.dims == [3, 5, 2]
        assert net.activations == [ActivationKind.TANH, ActivationKind.LINEAR]
        assert net.parameter_count == 3 * 5 + 5 + 5 * 2 + 2

    def test_deterministic_per_seed(self):
        a = init_mlp([4, 3], ["tanh"], 1)
        b = init_mlp([4, 3], ["tanh"], 1)
        np.testing.assert_array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_glorot_bound(self):
        net = init_mlp([10, 20], ["tanh"], 2)
        assert np.max(np.abs(net.layers[0].weights)) <= np.sqrt(6.0 / 30.0)
        assert np.all(net.layers[0].biases == 0.0)

    def test_activation_count_checked(self):
        with pytest.raises(DimensionMismatchError):
            init_mlp([3, 4, 2], ["tanh"], 0)

    def test_chain_validation(self):
        layer_a = DenseLayer(weights=np.zeros((4, 3)), biases=np.zeros(4), activation="tanh")
        layer_b = DenseLayer(weights=np.zeros((2, 5)), biases=np.zeros(2), activation="linear")
        with pytest.raises(ValueError):
            Mlp(layers=[layer_a, layer_b])


class TestForward:
    def test_known_values(self):
        layer = DenseLayer(weights=[[1.0, 2.0]], biases=[0.5], activation="linear")
        y, _ = forward(Mlp(layers=[layer]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(y, [3.5])

    def test_tanh_output_bounded(self, net):
        hidden = init_mlp([3, 4], ["tanh"], 0)
        y, _ = forward(hidden, np.full(3, 100.0))
        assert np.all(np.abs(y) <= 1.0)

    def test_batch_matches_rows(self, net):
        x = np.arange(6.0).reshape(2, 3) / 6.0
        batch, _ = forward(net, x)
        np.testing.assert_allclose(batch[1], forward(net, x[1])[0])

    def test_zero_parameters_give_zero_output(self, net):
        y, _ = forward(zero_like(net), np.array([0.4, -1.3, 2.0]))
        np.testing.assert_array_equal(y, np.zeros(2))

    def test_wrong_input_dim(self, net):
        with pytest.raises(DimensionMismatchError):
            forward(net, np.zeros(4))


class TestBackward:
    @pytest.mark.parametrize("layout", [IEN_LAYOUT, ACTOR_LAYOUT])
    def test_every_parameter_matches_finite_differences(self, layout):
        net = init_mlp([4, 6, 5, 3], layout, 11)
        rng = RngStream(12)
        _check_every_parameter(net, rng.draw_gaussian(4), 2.0 * rng.draw_uniform(3) - 1.0)

    def test_batched_every_parameter(self):
        net = init_mlp([3, 4, 2], ["tanh", "linear"], 5)
        rng = RngStream(13)
        _check_every_parameter(net, rng.draw_gaussian((3, 3)), rng.draw_gaussian((3, 2)))

    @pytest.mark.parametrize(
        "dims,layout",
        [
            ([6, 128, 64, 16], IEN_LAYOUT),
            ([26, 500, 300, 16], ACTOR_LAYOUT),
            ([42, 500, 300, 1], IEN_LAYOUT),
        ],
    )
    def test_layer_sizes_in_use(self, dims, layout):
        net = init_mlp(dims, layout, 3)
        rng = RngStream(14)
        x = rng.draw_gaussian(dims[0])
        target = 2.0 * rng.draw_uniform(dims[-1]) - 1.0
        _check_every_parameter(net, x, target, per_array=25, rng=rng.split("sites"))

    def test_input_gradient(self, net):
        x = np.array([0.3, -0.2, 0.7])
        target = np.array([0.1, -0.4])
        y, tape = forward(net, x)
        _, input_grad = backward(net, tape, y - target)
        eps = 1e-5
        for k in range(3):
            dx = np.zeros(3)
            dx[k] = eps
            numeric = (_loss(net, x + dx, target) - _loss(net, x - dx, target)) / (2 * eps)
            assert_gradient_matches(numeric, input_grad[k])

    def test_batched_grads_are_summed(self, net):
        x = np.array([[0.1, 0.2, 0.3], [-0.3, 0.0, 0.5]])
        g = np.array([[1.0, 0.0], [0.0, 1.0]])
        _, tape = forward(net, x)
        batch_grads, _ = backward(net, tape, g)
        total = np.zeros_like(net.layers[0].weights)
        for row, grad_row in zip(x, g):
            _, single_tape = forward(net, row)
            total += backward(net, single_tape, grad_row)[0].layers[0].weights
        np.testing.assert_allclose(batch_grads.layers[0].weights, total, atol=1e-12)

    def test_output_grad_shape_checked(self, net):
        _, tape = forward(net, np.zeros(3))
        with pytest.raises(DimensionMismatchError):
            backward(net, tape, np.zeros(3))


class TestUpdates:
    def test_sgd_step_reduces_loss(self, net):
        x, target = np.array([0.5, -0.5, 0.2]), np.array([1.0, -1.0])
        y, tape = forward(net, x)
        grads, _ = backward(net, tape, y - target)
        stepped = sgd_step(net, grads, SgdConfig(learning_rate=0.01))
        assert _loss(stepped, x, target) < _loss(net, x, target)

    def test_zero_gradient_is_a_no_op(self, net):
        stepped = sgd_step(net, _grads_like(net, lambda values: np.zeros_like(values)), SgdConfig(learning_rate=0.5))
        for before, after in zip(net.layers, stepped.layers):
            np.testing.assert_array_equal(after.weights, before.weights)
            np.testing.assert_array_equal(after.biases, before.biases)

    def test_unit_step_along_parameters_zeroes_net(self, net):
        stepped = sgd_step(net, _grads_like(net, lambda values: values), SgdConfig(learning_rate=1.0))
        assert all(np.all(layer.weights == 0.0) and np.all(layer.biases == 0.0) for layer in stepped.layers)

    def test_two_half_steps_equal_one_step(self, net):
        x, target = np.array([0.5, -0.5, 0.2]), np.array([1.0, -1.0])
        y, tape = forward(net, x)
        grads, _ = backward(net, tape, y - target)
        full = sgd_step(net, grads, SgdConfig(learning_rate=0.2))
        halves = sgd_step(sgd_step(net, grads, SgdConfig(learning_rate=0.1)), grads, SgdConfig(learning_rate=0.1))
        for a, b in zip(full.layers, halves.layers):
            np.testing.assert_allclose(a.weights, b.weights, atol=1e-15)
            np.testing.assert_allclose(a.biases, b.biases, atol=1e-15)

    def test_blend_endpoints(self, net):
        other = init_mlp([3, 5, 2], ["tanh", "linear"], 99)
        np.testing.assert_array_equal(blend(net, other, 1.0).layers[0].weights, net.layers[0].weights)
        np.testing.assert_array_equal(blend(net, other, 0.0).layers[0].weights, other.layers[0].weights)
        half = blend(net, other, 0.5).layers[1].weights
        np.testing.assert_allclose(half, 0.5 * (net.layers[1].weights + other.layers[1].weights))

    def test_blend_dims_checked(self, net):
        with pytest.raises(DimensionMismatchError):
            blend(net, init_mlp([3, 4, 2], ["tanh", "linear"], 0), 0.5)

    def test_copy_is_independent(self, net):
        clone = copy_mlp(net)
        assert clone.layers[0].weights is not net.layers[0].weights
        np.testing.assert_array_equal(clone.layers[0].weights, net.layers[0].weights)

    def test_zero_like(self, net):
        assert all(np.all(layer.weights == 0.0) for layer in zero_like(net).layers)


class TestCheckpoint:
    def test_save_and_load(self, net, tmp_path):
        path = tmp_path / "net.json"
        save_mlp(net, path)
        loaded = load_mlp(path)
        assert loaded.dims == net.dims
        assert loaded.activations == net.activations
        x = np.array([0.1, 0.2, 0.3])
        np.testing.assert_array_equal(forward(loaded, x)[0], forward(net, x)[0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_mlp(tmp_path / "absent.json")

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("not json")
        with pytest.raises(CheckpointError):
            load_mlp(path)
