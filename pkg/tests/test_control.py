import math

import numpy as np
import pytest

from src.HeteroTrack.control import CostateTrajectory, hamiltonian, solve_pmp, stationarity_residuals
from src.HeteroTrack.errors import NoConvergence
from src.HeteroTrack.state import RobotAction, RobotState


def _circle_reference(start, horizon, dt, radius=20.0, rate=0.1, phase=0.0):
    x, y = start
    points = []
    t = phase
    for _ in range(horizon):
        points.append((x, y))
        x += -radius * rate * math.sin(rate * t) * dt
        y += radius * rate * math.cos(rate * t) * dt
        t += dt
    return points


def test_hamiltonian_examples():
    robot = RobotState((1.0, 2.0), 0.0)
    assert hamiltonian(robot, (1.0, 2.0), RobotAction(), (0.0, 0.0, 0.0)) == 0.0
    assert hamiltonian(robot, (1.0, 2.0), RobotAction(0.6, -0.8), (0.0, 0.0, 0.0)) == pytest.approx(0.5)
    assert hamiltonian(robot, (1.0, 2.0), RobotAction(1.0, 0.0), (1.0, 0.0, 0.0)) == pytest.approx(1.5)


def test_robot_on_static_target_stays_put():
    robot = RobotState((2.0, -1.0), 0.4)
    solution = solve_pmp(robot, [(2.0, -1.0)] * 10, horizon=10, dt=0.1)
    assert solution.converged
    assert solution.stationarity_residual < 1e-6
    for action in solution.actions:
        assert abs(action.linear_velocity) < 1e-6 and abs(action.angular_velocity) < 1e-6


def test_horizon_one():
    robot = RobotState((0.0, 0.0), 0.0)
    solution = solve_pmp(robot, [(3.0, 4.0)], horizon=1, dt=0.1)
    assert len(solution.actions) == 1
    assert solution.converged
    # the only action is paired with the terminal costate, which is zero
    assert solution.actions[0] == RobotAction(0.0, 0.0)
    np.testing.assert_allclose(solution.costates.lambdas[0], [0.1 * -3.0, 0.1 * -4.0, 0.0])


def test_converged_solution_is_self_consistent():
    robot = RobotState((0.0, 0.0), 0.0)
    reference = _circle_reference((1.5, 1.0), 10, 0.1)
    solution = solve_pmp(robot, reference, horizon=10, dt=0.1, max_speed=100.0)
    assert solution.converged
    assert len(solution.actions) == 10 and len(solution.states) == 11
    residuals = stationarity_residuals(solution.states, solution.actions, solution.costates.lambdas)
    assert max(max(abs(rv), abs(rw)) for rv, rw in residuals) < 1e-6
    assert np.all(solution.costates.terminal == 0.0)
    assert solution.actions[0].linear_velocity > 0


def test_cost_is_non_increasing():
    robot = RobotState((-1.0, 0.5), 1.0)
    reference = _circle_reference((2.0, 3.0), 10, 0.1, phase=4.0)
    solution = solve_pmp(robot, reference, horizon=10, dt=0.1, relaxation=0.1, max_speed=100.0)
    history = solution.cost_history
    assert len(history) == solution.iterations + 1
    for before, after in zip(history, history[1:]):
        assert after <= before + 1e-12 * max(1.0, before)


def test_warm_start_needs_fewer_iterations():
    robot = RobotState((0.0, 0.0), 0.0)
    reference = _circle_reference((1.0, 1.0), 10, 0.1)
    cold = solve_pmp(robot, reference, horizon=10, dt=0.1, max_speed=100.0)
    warm = solve_pmp(robot, reference, horizon=10, dt=0.1, max_speed=100.0, initial_actions=cold.actions)
    assert warm.iterations < cold.iterations
    assert warm.converged


def test_speed_is_clamped():
    robot = RobotState((0.0, 0.0), 0.0)
    solution = solve_pmp(robot, [(15.0, 0.0)] * 10, horizon=10, dt=0.1, max_speed=2.0)
    assert solution.saturated
    assert all(abs(a.linear_velocity) <= 2.0 for a in solution.actions)
    assert solution.states[1].position[0] == pytest.approx(0.2)


def test_no_convergence():
    robot = RobotState((0.0, 0.0), 0.0)
    reference = [(5.0, 5.0)] * 10
    with pytest.raises(NoConvergence) as excinfo:
        solve_pmp(robot, reference, horizon=10, dt=0.1, max_iterations=2, strict=True)
    assert excinfo.value.solution is not None
    assert not excinfo.value.solution.converged
    relaxed = solve_pmp(robot, reference, horizon=10, dt=0.1, max_iterations=2)
    assert not relaxed.converged
    assert relaxed.iterations == 2


def test_invalid_arguments():
    robot = RobotState((0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        solve_pmp(robot, [(0.0, 0.0)], horizon=0, dt=0.1)
    with pytest.raises(ValueError):
        solve_pmp(robot, [(0.0, 0.0)], horizon=3, dt=0.1)
    with pytest.raises(ValueError):
        CostateTrajectory(np.ones((3, 3)))
