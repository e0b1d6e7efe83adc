import math

import numpy as np
import pytest

from src.HeteroTrack.motion import step_robot, step_target, target_velocity
from src.HeteroTrack.state import RobotAction, RobotState, TargetState


@pytest.mark.parametrize(
    "heading, v, omega, dt, position, new_heading",
    [
        (0.0, 1.0, 0.0, 1.0, (1.0, 0.0), 0.0),
        (math.pi / 2, 2.0, 0.0, 0.5, (0.0, 1.0), math.pi / 2),
        (0.0, 0.0, math.pi, 2.0, (0.0, 0.0), 0.0),
    ],
)
def test_step_robot(heading, v, omega, dt, position, new_heading):
    moved = step_robot(RobotState((0.0, 0.0), heading), RobotAction(v, omega), dt)
    np.testing.assert_allclose(moved.position, position, atol=1e-12)
    assert moved.heading == pytest.approx(new_heading, abs=1e-12)


def test_zero_action_keeps_position():
    robot = RobotState((3.0, -2.0), 2.5)
    moved = step_robot(robot, RobotAction(), 0.1)
    assert moved.position == robot.position
    assert moved.heading == robot.heading


def test_heading_always_wrapped():
    robot = RobotState((0.0, 0.0), 0.0)
    for _ in range(200):
        robot = step_robot(robot, RobotAction(1.0, 3.0), 0.1)
        assert -math.pi < robot.heading <= math.pi


def test_step_rejects_nonpositive_dt(rng):
    with pytest.raises(ValueError):
        step_robot(RobotState((0.0, 0.0), 0.0), RobotAction(), 0.0)
    with pytest.raises(ValueError):
        step_target(TargetState((0.0, 0.0), 20.0, 0.1), -0.1, rng, 0.2)


def test_noiseless_target_step(rng):
    target = TargetState((0.0, 0.0), 20.0, 0.1, phase_time=0.0)
    moved = step_target(target, 0.01, rng, 0.0)
    np.testing.assert_allclose(moved.position, (0.0, 0.02), atol=1e-12)
    assert moved.phase_time == pytest.approx(0.01)
    assert target_velocity(target) == pytest.approx((0.0, 2.0))


def test_full_revolution_returns_to_start(rng):
    dt = 1e-3
    target = TargetState((5.0, 5.0), 20.0, 0.1)
    for _ in range(int(round(2 * math.pi / 0.1 / dt))):
        target = step_target(target, dt, rng, 0.0)
    np.testing.assert_allclose(target.position, (5.0, 5.0), atol=1e-2)


def test_noisy_target_is_reproducible():
    def trajectory(seed):
        rng = np.random.default_rng(seed)
        target = TargetState((0.0, 0.0), 20.0, 0.1)
        points = []
        for _ in range(50):
            target = step_target(target, 0.1, rng, 0.2)
            points.append(target.position)
        return points

    assert trajectory(4) == trajectory(4)
    assert trajectory(4) != trajectory(5)


def test_process_noise_variance_scales_with_dt():
    rng = np.random.default_rng(0)
    target = TargetState((0.0, 0.0), 20.0, 0.1)
    drift = np.array(target_velocity(target)) * 0.1
    samples = np.array([np.array(step_target(target, 0.1, rng, 0.2).position) - drift for _ in range(20000)])
    np.testing.assert_allclose(samples.var(axis=0), [0.2**2 * 0.1] * 2, rtol=0.05)
