import numpy as np
import pytest

from ris_lab.config.settings import DEFAULTS_PATH
from ris_lab.domain.models.environment import EnvConfig
from ris_lab.domain.models.geometry import ArrayConfig, PathLossConfig, ScenarioGeometry
from ris_lab.domain.models.scenario import load_scenario
from ris_lab.domain.services.channel import true_channels
from ris_lab.domain.services.environment import RisEnvironment, TrueChannelOracle
from ris_lab.domain.services.network import copy_mlp
from ris_lab.utils.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(7)


@pytest.fixture
def reference_geometry():
    return ScenarioGeometry(
        loc_bs=(20.0, 0.0, 10.0),
        loc_ris=(0.0, 30.0, 20.0),
        loc_ue=(10.0, 50.0, 0.0),
        scatterers_ris_ue=[(5.0, 40.0, 10.0), (5.0, 45.0, 5.0)],
    )


@pytest.fixture
def small_arrays():
    return ArrayConfig(m_bs=2, k_ue=2, n_x=2, n_y=2)


@pytest.fixture
def path_loss():
    return PathLossConfig()


@pytest.fixture
def env_config():
    return EnvConfig()


def random_complex(np_rng, *shape):
    return np_rng.standard_normal(shape) + 1j * np_rng.standard_normal(shape)


def random_hermitian_pd(np_rng, k):
    a = random_complex(np_rng, k, k)
    return a @ a.conj().T + k * np.eye(k)


@pytest.fixture
def true_pair(reference_geometry, small_arrays, path_loss):
    return true_channels(reference_geometry, small_arrays, path_loss, 0)


@pytest.fixture
def true_environment(reference_geometry, small_arrays, env_config, true_pair):
    oracle = TrueChannelOracle(true_pair)
    return RisEnvironment(reference_geometry, small_arrays.m_bs, small_arrays.n, env_config, oracle, evaluator=oracle)


TINY_OVERRIDES = [
    "arrays.m_bs=2",
    "arrays.k_ue=2",
    "arrays.n_x=2",
    "arrays.n_y=2",
    "ien.dataset.u_locations=2",
    "ien.dataset.f_thetas_per_location=2",
    "ien.training.epochs=2",
    "ien.training.batch_v=2",
    "ien.training.hidden_dims=[8]",
    "ddpg.hidden_dims=[8]",
    "ddpg.batch_v=2",
    "ddpg.buffer_capacity=16",
    "ddpg.episodes_j=2",
    "ddpg.steps_t=2",
    "ao.max_sweeps=3",
    "ao.phase_grid_points=4",
    "random_trials=3",
    "sweep.ris_elements=[4]",
    "sweep.paths=[1,2]",
    "sweep.etas=[0.0,0.1]",
    "sweep.coherence_times=[1000,20000]",
    "sweep.seeds=[0]",
    "sweep.eta_estimation_samples=20",
    "interaction_slots_t=2000",
]


@pytest.fixture
def tiny_config():
    return load_scenario(DEFAULTS_PATH, list(TINY_OVERRIDES))


FD_STEP = 1e-5


def parameter_sites(net, per_array=None, rng=None):
    """``(layer, field, index)`` of every parameter, or of ``per_array`` seeded picks per weight/bias array."""
    for layer_idx, layer in enumerate(net.layers):
        for field in ("weights", "biases"):
            values = getattr(layer, field)
            if per_array is None or values.size <= per_array:
                flat = range(values.size)
            else:
                flat = rng.choice(values.size, per_array)
            for f in flat:
                yield layer_idx, field, np.unravel_index(int(f), values.shape)


def shifted(net, site, delta):
    """Copy of ``net`` with one parameter moved by ``delta``."""
    layer_idx, field, index = site
    clone = copy_mlp(net)
    getattr(clone.layers[layer_idx], field)[index] += delta
    return clone


def central_difference(loss, net, site, h=FD_STEP):
    return (loss(shifted(net, site, h)) - loss(shifted(net, site, -h))) / (2.0 * h)


def entry_at(layered, site):
    """The site's entry of an ``Mlp`` or of an ``MlpGrads``."""
    layer_idx, field, index = site
    return float(getattr(layered.layers[layer_idx], field)[index])


def assert_gradient_matches(numeric, analytic):
    # relative error 1e-5, with an absolute floor for entries that are numerically zero
    assert numeric == pytest.approx(analytic, rel=1e-5, abs=1e-8)
