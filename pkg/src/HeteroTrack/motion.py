"""Discrete-time propagation of unicycle robots and noisy circular targets."""

import math
from typing import Tuple

import numpy as np

from .state import RobotAction, RobotState, TargetState


def target_velocity(target: TargetState) -> Tuple[float, float]:
    """Circular drift g_j at the target's current phase time."""
    d, phi, t = target.radius, target.angular_rate, target.phase_time
    return (-d * phi * math.sin(phi * t), d * phi * math.cos(phi * t))


def step_robot(state: RobotState, action: RobotAction, dt: float) -> RobotState:
    """Forward-Euler unicycle step; heading re-wrapped by RobotState."""
    if not dt > 0:
        raise ValueError(f"dt 必须为正: {dt}")
    x, y = state.position
    v, omega = action.linear_velocity, action.angular_velocity
    return RobotState(
        (x + v * math.cos(state.heading) * dt, y + v * math.sin(state.heading) * dt),
        state.heading + omega * dt,
        state.kind,
    )


def step_target(target: TargetState, dt: float, rng: np.random.Generator, sigma: float) -> TargetState:
    """Euler step of the circular drift plus N(0, sigma^2 * dt) noise per axis.

    Two normal samples are always drawn, also for sigma = 0, so that the noise
    stream stays aligned across noiseless and noisy runs.
    """
    if not dt > 0:
        raise ValueError(f"dt 必须为正: {dt}")
    vx, vy = target_velocity(target)
    noise = rng.normal(0.0, 1.0, size=2) * (sigma * math.sqrt(dt))
    x, y = target.position
    return TargetState(
        (x + vx * dt + noise[0], y + vy * dt + noise[1]),
        target.radius,
        target.angular_rate,
        target.phase_time + dt,
    )
