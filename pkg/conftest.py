import numpy as np
import pytest

from src.HeteroTrack.scenario import ScenarioConfig


@pytest.fixture
def default_config() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture
def noiseless_config() -> ScenarioConfig:
    """One sufficient robot, one target, no noise anywhere."""
    return ScenarioConfig(
        n_sufficient=1,
        n_limited=0,
        n_targets=1,
        time_steps=50,
        process_noise_sigma=0.0,
        range_noise_sigma=0.0,
        bearing_noise_sigma=0.0,
        seed=3,
    )


@pytest.fixture
def short_config() -> ScenarioConfig:
    """Default team over a handful of steps, for fast harness tests."""
    return ScenarioConfig(time_steps=5, seed=1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
