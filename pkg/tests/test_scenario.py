import math

import pytest

from src.HeteroTrack.errors import ConfigError, InfeasibleScenario, ZeroAngularRate
from src.HeteroTrack.motion import step_target, target_velocity
from src.HeteroTrack.scenario import ScenarioConfig, build_scenario, derive_target_radius, scenario_rngs
from src.HeteroTrack.state import LimitedSensorKind, RobotKind, TargetState


def test_default_sized_world():
    world = build_scenario(ScenarioConfig(n_sufficient=2, n_limited=3, n_targets=3, placement_box_half_width=10.0))
    assert len(world.robots) == 5
    assert len(world.targets) == 3
    assert world.step == 0 and world.clock == 0.0
    for item in world.robots + world.targets:
        assert all(abs(c) <= 10.0 for c in item.position)
    assert [r.kind for r in world.robots] == [RobotKind.SUFFICIENT] * 2 + [RobotKind.LIMITED] * 3


def test_single_pair_is_feasible():
    world = build_scenario(ScenarioConfig(n_sufficient=0, n_limited=2, n_targets=1))
    assert len(world.robots) == 2
    assert all(r.kind == RobotKind.LIMITED for r in world.robots)


def test_single_limited_robot_is_infeasible():
    with pytest.raises(InfeasibleScenario):
        build_scenario(ScenarioConfig(n_sufficient=0, n_limited=1, n_targets=1))


def test_same_seed_same_world():
    config = ScenarioConfig(seed=7)
    first, second = build_scenario(config), build_scenario(config)
    assert first.robots == second.robots
    assert first.targets == second.targets
    assert build_scenario(ScenarioConfig(seed=8)).robots != first.robots


def test_target_phase_within_one_period():
    config = ScenarioConfig(n_targets=2, target_angular_rate=0.1)
    for target in build_scenario(config).targets:
        assert 0.0 <= target.phase_time < 2 * math.pi / 0.1
        assert target.radius == pytest.approx(20.0)


def test_rng_streams_are_independent_and_reproducible():
    placement, noise = scenario_rngs(5)
    placement_again, noise_again = scenario_rngs(5)
    assert placement.uniform() == placement_again.uniform()
    assert noise.normal() == noise_again.normal()
    a, b = scenario_rngs(5)
    assert a.uniform() != b.uniform()


@pytest.mark.parametrize("speed, rate, expected", [(2.0, 0.1, 20.0), (1.0, 1.0, 1.0), (2.0, -0.1, 20.0)])
def test_derive_target_radius(speed, rate, expected):
    assert derive_target_radius(speed, rate) == pytest.approx(expected)


def test_derive_target_radius_errors():
    with pytest.raises(ZeroAngularRate):
        derive_target_radius(2.0, 0.0)
    with pytest.raises(ConfigError):
        derive_target_radius(0.0, 0.1)
    with pytest.raises(ConfigError):
        TargetState((0.0, 0.0), radius=0.0, angular_rate=0.1)


def test_derived_radius_gives_configured_tangential_speed(rng):
    target = TargetState((0.0, 0.0), derive_target_radius(2.0, 0.1), 0.1)
    for _ in range(20):
        assert math.hypot(*target_velocity(target)) == pytest.approx(2.0, abs=1e-9)
        target = step_target(target, 0.1, rng, 0.0)


@pytest.mark.parametrize(
    "overrides",
    [
        {"dt": 0.0},
        {"time_steps": 0},
        {"range_noise_sigma": -0.1},
        {"n_targets": -1},
        {"robot_max_speed": 0.0},
        {"pmp_relaxation": 1.5},
        {"initial_variance": 0.0},
        {"seed": -1},
        {"limited_sensor_kind": "Sonar"},
    ],
)
def test_validate_rejects(overrides):
    with pytest.raises(ConfigError):
        ScenarioConfig(**overrides).validate()


def test_defaults_and_dict():
    config = ScenarioConfig().validate()
    data = config.to_dict()
    assert data["limited_sensor_kind"] == "RangeOnly"
    assert data["n_sufficient"] == 2 and data["n_limited"] == 3 and data["n_targets"] == 2
    assert set(data) == set(ScenarioConfig.field_names())
    assert ScenarioConfig(limited_sensor_kind=LimitedSensorKind.BEARING_ONLY).validate()
