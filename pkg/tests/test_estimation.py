import math

import numpy as np
import pytest

from src.HeteroTrack.errors import SingularInnovationCovariance
from src.HeteroTrack.estimation import EkfBelief, ekf_predict, ekf_update, initial_belief
from src.HeteroTrack.sensing import bearing_measurement, range_measurement
from src.HeteroTrack.state import MeasurementKind, RobotState, TargetState

VARIANCES = {MeasurementKind.RANGE: 0.04, MeasurementKind.BEARING: 0.04}
EXACT = {MeasurementKind.RANGE: 0.0, MeasurementKind.BEARING: 0.0}


def _target(x=0.0, y=0.0, t=0.0):
    return TargetState((x, y), 20.0, 0.1, t)


def _exact_measurements(robot, target):
    return [range_measurement(robot, target), bearing_measurement(robot, target)]


def test_initial_belief():
    belief = initial_belief(_target(3.0, -1.0), offset=0.5, variance=0.5)
    np.testing.assert_allclose(belief.mean, [3.5, -0.5])
    np.testing.assert_allclose(belief.covariance, 0.5 * np.eye(2))
    assert math.hypot(*(belief.mean - np.array([3.0, -1.0]))) == pytest.approx(0.7071, abs=1e-4)
    assert belief.trace == pytest.approx(1.0)


def test_predict_without_process_noise_keeps_covariance():
    belief = EkfBelief(np.zeros(2), 0.3 * np.eye(2))
    predicted = ekf_predict(belief, _target(t=0.0), 0.1, np.zeros((2, 2)))
    np.testing.assert_allclose(predicted.covariance, belief.covariance)
    np.testing.assert_allclose(predicted.mean, [0.0, 0.2], atol=1e-12)


def test_predict_grows_trace_linearly():
    sigma, dt = 0.2, 0.1
    belief = EkfBelief(np.zeros(2), 0.5 * np.eye(2))
    traces = [belief.trace]
    target = _target()
    for _ in range(10):
        belief = ekf_predict(belief, target, dt, sigma**2 * np.eye(2))
        traces.append(belief.trace)
    np.testing.assert_allclose(np.diff(traces), 2 * sigma**2 * dt)
    with pytest.raises(ValueError):
        ekf_predict(belief, target, 0.0, np.eye(2))


def test_empty_update_is_identity():
    belief = EkfBelief(np.array([1.0, 2.0]), np.eye(2))
    assert ekf_update(belief, [], [RobotState((0.0, 0.0), 0.0)], VARIANCES) is belief


def test_repeated_exact_measurements_converge():
    robot = RobotState((0.0, 0.0), 0.3)
    target = _target(3.0, 4.0)
    belief = EkfBelief(np.array([3.5, 4.5]), 0.5 * np.eye(2))
    for _ in range(50):
        belief = ekf_update(belief, _exact_measurements(robot, target), [robot], EXACT)
    assert np.linalg.norm(belief.mean - np.array(target.position)) < 1e-3


def test_exact_update_relinearises_onto_the_target():
    robot = RobotState((0.0, 0.0), 0.3)
    target = _target(3.0, 4.0)
    prior = EkfBelief(np.array([3.5, 4.5]), 0.5 * np.eye(2))
    measurements = _exact_measurements(robot, target)
    posterior = ekf_update(prior, measurements, [robot], EXACT)
    assert np.linalg.norm(posterior.mean - np.array(target.position)) < 1e-6
    assert posterior.trace < 1e-6
    single = ekf_update(prior, measurements, [robot], EXACT, max_iterations=1)
    assert np.linalg.norm(single.mean - np.array(target.position)) > 1e-3
    with pytest.raises(ValueError):
        ekf_update(prior, measurements, [robot], EXACT, max_iterations=0)


def test_range_pair_exact_update():
    robots = [RobotState((0.0, 0.0), 0.0), RobotState((8.0, 0.0), 0.0)]
    target = _target(3.0, 4.0)
    prior = EkfBelief(np.array([3.5, 4.5]), 0.5 * np.eye(2))
    measurements = [range_measurement(robot, target, robot_index=i) for i, robot in enumerate(robots)]
    posterior = ekf_update(prior, measurements, robots, [0.0, 0.0])
    np.testing.assert_allclose(posterior.mean, target.position, atol=1e-6)


def test_update_never_increases_trace():
    rng = np.random.default_rng(8)
    for _ in range(100):
        robot = RobotState(tuple(rng.uniform(-10, 10, size=2)), rng.uniform(-math.pi, math.pi))
        target = _target(*rng.uniform(-10, 10, size=2))
        if np.linalg.norm(np.subtract(target.position, robot.position)) < 0.5:
            continue
        a = rng.normal(size=(2, 2))
        prior = EkfBelief(np.array(target.position) + rng.normal(scale=0.3, size=2), a @ a.T + 0.1 * np.eye(2))
        posterior = ekf_update(prior, _exact_measurements(robot, target), [robot], [0.04, 0.04])
        assert posterior.trace <= prior.trace + 1e-12
        np.testing.assert_allclose(posterior.covariance, posterior.covariance.T, atol=1e-12)
        assert np.linalg.eigvalsh(posterior.covariance).min() >= 0.0


def test_bearing_innovation_is_wrapped():
    robot = RobotState((0.0, 0.0), 0.0)
    target = _target(-5.0, 0.01)
    belief = EkfBelief(np.array([-5.0, -0.01]), 0.01 * np.eye(2))
    measurement = bearing_measurement(robot, target)
    posterior = ekf_update(belief, [measurement], [robot], VARIANCES)
    assert np.linalg.norm(posterior.mean - belief.mean) < 0.05
    assert posterior.mean[1] > belief.mean[1]


def test_measurement_robot_index_selects_robot():
    robots = [RobotState((100.0, 100.0), 0.0), RobotState((0.0, 0.0), 0.0)]
    target = _target(3.0, 4.0)
    measurement = range_measurement(robots[1], target, robot_index=1)
    belief = EkfBelief(np.array([3.0, 4.0]), 0.5 * np.eye(2))
    posterior = ekf_update(belief, [measurement], robots, VARIANCES)
    np.testing.assert_allclose(posterior.mean, [3.0, 4.0], atol=1e-12)


def test_singular_innovation_covariance():
    robot = RobotState((0.0, 0.0), 0.0)
    target = _target(3.0, 4.0)
    belief = EkfBelief(np.array([3.0, 4.0]), 1e6 * np.eye(2))
    duplicated = [range_measurement(robot, target), range_measurement(robot, target)]
    with pytest.raises(SingularInnovationCovariance):
        ekf_update(belief, duplicated, [robot], [0.0, 0.0])
