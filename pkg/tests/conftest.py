import numpy as np
import pytest

from repisac import ScenarioConfig, drop_entities, gen_channels
from repisac.channel import clutter_covariance
from repisac.detector import trial_rng
from repisac.precoding import build_precoders


def tiny_config(**overrides) -> ScenarioConfig:
    """Small, fast scenario used across the unit tests."""
    base = dict(
        n_tx_antennas=2, n_rx_antennas=2, n_users=2, slot_length=4,
        sensing_power_fraction=0.4, mc_trials=50, calibration_trials=200,
        master_seed=7,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture
def small_setup():
    config = tiny_config()
    geometry = drop_entities(config, trial_rng(config.master_seed, (1, 0), 0))
    channels = gen_channels(geometry, config, trial_rng(config.master_seed, (1, 1), 0))
    clutter_model = clutter_covariance(config, geometry)
    precoders = build_precoders(config, channels)
    return config, geometry, channels, clutter_model, precoders


@pytest.fixture
def rng():
    return np.random.default_rng(123)
