"""
Robot actions from Pontryagin's conditions, solved by a forward-backward sweep.

Discretisation (Euler, step dt, horizon H):
    states   x_0 .. x_H    (x_0 fixed)
    actions  u_0 .. u_{H-1}
    costates lam_0 .. lam_H, lam_H = 0
    lam_k = lam_{k+1} + dt * dH/dx(x_k, u_k, lam_{k+1})
Stationarity of u_k is evaluated with lam_{k+1}:
    v_k + lam1 cos(theta_k) + lam2 sin(theta_k) = 0,   w_k + lam3 = 0
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .errors import NoConvergence
from .motion import step_robot
from .state import RobotAction, RobotState

Vec2 = Tuple[float, float]


@dataclass(frozen=True)
class CostateTrajectory:
    lambdas: np.ndarray  # (H + 1, 3)

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=float)
        if lambdas.ndim != 2 or lambdas.shape[1] != 3:
            raise ValueError(f"协态轨迹必须是 (H+1) x 3, 实际为 {lambdas.shape}")
        if np.any(lambdas[-1] != 0.0):
            raise ValueError(f"终端协态必须为 0: {lambdas[-1]}")
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def terminal(self) -> np.ndarray:
        return self.lambdas[-1]


@dataclass
class ControlSolution:
    actions: List[RobotAction]
    states: List[RobotState]
    stationarity_residual: float
    costates: CostateTrajectory
    iterations: int = 0
    converged: bool = False
    saturated: bool = False
    cost_history: List[float] = field(default_factory=list)

    @property
    def first_action(self) -> RobotAction:
        return self.actions[0]


def hamiltonian(robot: RobotState, target_ref: Vec2, action: RobotAction, costate: Sequence[float]) -> float:
    """lam1 v cos(th) + lam2 v sin(th) + lam3 w + 1/2 [tracking error^2 + v^2 + w^2]"""
    l1, l2, l3 = costate
    v, w = action.linear_velocity, action.angular_velocity
    ex = robot.position[0] - target_ref[0]
    ey = robot.position[1] - target_ref[1]
    return (
        l1 * v * math.cos(robot.heading)
        + l2 * v * math.sin(robot.heading)
        + l3 * w
        + 0.5 * (ex * ex + ey * ey + v * v + w * w)
    )


def trajectory_cost(
    states: Sequence[RobotState], actions: Sequence[RobotAction], target_traj: Sequence[Vec2], dt: float
) -> float:
    """sum_k dt * 1/2 (tracking error^2 + v^2 + w^2) over the horizon."""
    total = 0.0
    for k, action in enumerate(actions):
        ex = states[k].position[0] - target_traj[k][0]
        ey = states[k].position[1] - target_traj[k][1]
        v, w = action.linear_velocity, action.angular_velocity
        total += 0.5 * dt * (ex * ex + ey * ey + v * v + w * w)
    return total


def _forward(initial: RobotState, actions: Sequence[RobotAction], dt: float) -> List[RobotState]:
    states = [initial]
    for action in actions:
        states.append(step_robot(states[-1], action, dt))
    return states


def _backward(
    states: Sequence[RobotState], actions: Sequence[RobotAction], target_traj: Sequence[Vec2], dt: float
) -> np.ndarray:
    horizon = len(actions)
    lambdas = np.zeros((horizon + 1, 3))
    for k in range(horizon - 1, -1, -1):
        l1, l2, l3 = lambdas[k + 1]
        x, y = states[k].position
        theta = states[k].heading
        v = actions[k].linear_velocity
        lambdas[k, 0] = l1 + dt * (x - target_traj[k][0])
        lambdas[k, 1] = l2 + dt * (y - target_traj[k][1])
        lambdas[k, 2] = l3 + dt * (-l1 * v * math.sin(theta) + l2 * v * math.cos(theta))
    return lambdas


def stationarity_residuals(
    states: Sequence[RobotState], actions: Sequence[RobotAction], lambdas: np.ndarray
) -> List[Tuple[float, float]]:
    """Per-step (dH/dv, dH/dw) evaluated with lam_{k+1}."""
    residuals = []
    for k, action in enumerate(actions):
        l1, l2, l3 = lambdas[k + 1]
        theta = states[k].heading
        residuals.append(
            (
                action.linear_velocity + l1 * math.cos(theta) + l2 * math.sin(theta),
                action.angular_velocity + l3,
            )
        )
    return residuals


def solve_pmp(
    initial: RobotState,
    target_traj: Sequence[Vec2],
    horizon: int,
    dt: float,
    max_speed: float = 2.0,
    relaxation: float = 0.1,
    tolerance: float = 1e-6,
    max_iterations: int = 500,
    initial_actions: Optional[Sequence[RobotAction]] = None,
    strict: bool = False,
) -> ControlSolution:
    """Forward-backward sweep with relaxation towards the stationarity solution.

    Each iteration integrates states forward under the current actions,
    costates backward from lam_H = 0, then moves every action a fraction
    ``relaxation`` of the way to v = -(lam1 cos + lam2 sin), w = -lam3.
    Stops when the max residual < ``tolerance`` or after ``max_iterations``
    updates. Linear velocity is clamped to ``max_speed`` afterwards; the
    recorded residual is that of the unclamped solution.

    With ``strict`` a non-converged solve raises NoConvergence (carrying the
    solution); otherwise it is logged and returned with converged=False.
    """
    if horizon < 1:
        raise ValueError(f"horizon 必须 >= 1: {horizon}")
    if not dt > 0:
        raise ValueError(f"dt 必须为正: {dt}")
    if len(target_traj) < horizon:
        raise ValueError(f"目标参考轨迹长度 {len(target_traj)} < horizon {horizon}")

    actions = list(initial_actions or [])[:horizon]
    actions += [RobotAction()] * (horizon - len(actions))

    cost_history: List[float] = []
    converged = False
    iterations = 0
    while True:
        states = _forward(initial, actions, dt)
        lambdas = _backward(states, actions, target_traj, dt)
        residuals = stationarity_residuals(states, actions, lambdas)
        residual = max(max(abs(rv), abs(rw)) for rv, rw in residuals)
        cost_history.append(trajectory_cost(states, actions, target_traj, dt))
        if residual < tolerance:
            converged = True
            break
        if iterations >= max_iterations:
            break
        actions = [
            RobotAction(a.linear_velocity - relaxation * rv, a.angular_velocity - relaxation * rw)
            for a, (rv, rw) in zip(actions, residuals)
        ]
        iterations += 1

    saturated = any(abs(a.linear_velocity) > max_speed for a in actions)
    if saturated:
        actions = [a.clamped(max_speed) for a in actions]
        states = _forward(initial, actions, dt)

    solution = ControlSolution(
        actions=actions,
        states=states,
        stationarity_residual=residual,
        costates=CostateTrajectory(lambdas),
        iterations=iterations,
        converged=converged,
        saturated=saturated,
        cost_history=cost_history,
    )
    if not converged:
        message = f"PMP 扫描未收敛: residual={residual:.3e} (tol {tolerance:g}) after {iterations} iterations"
        if strict:
            raise NoConvergence(message, solution)
        logger.warning(f"[control] {message}")
    else:
        logger.debug(f"[control] PMP 收敛: {iterations} 次迭代, residual={residual:.3e}")
    return solution
