"""Range and bearing measurement models with additive Gaussian noise.

The range model is half the *squared* distance, so its gradient is the plain
offset vector used in the observability rows.
"""

import math
from dataclasses import dataclass
from typing import List, TYPE_CHECKING

import numpy as np

from .errors import CoincidentPositions
from .state import LimitedSensorKind, MeasurementKind, RobotState, TargetState
from .utils import wrap_angle

if TYPE_CHECKING:
    from .scenario import ScenarioConfig


@dataclass(frozen=True)
class Measurement:
    value: float
    kind: MeasurementKind
    robot_index: int = 0
    target_index: int = 0


def range_model(robot_position, target_position) -> float:
    dx = target_position[0] - robot_position[0]
    dy = target_position[1] - robot_position[1]
    return 0.5 * (dy * dy + dx * dx)


def bearing_model(robot_position, robot_heading: float, target_position) -> float:
    dx = target_position[0] - robot_position[0]
    dy = target_position[1] - robot_position[1]
    if dx == 0.0 and dy == 0.0:
        raise CoincidentPositions(f"机器人与目标位置重合: {tuple(robot_position)}")
    return wrap_angle(math.atan2(dy, dx) - robot_heading)


def range_measurement(
    robot: RobotState, target: TargetState, noise: float = 0.0, robot_index: int = 0, target_index: int = 0
) -> Measurement:
    value = range_model(robot.position, target.position) + noise
    return Measurement(value, MeasurementKind.RANGE, robot_index, target_index)


def bearing_measurement(
    robot: RobotState, target: TargetState, noise: float = 0.0, robot_index: int = 0, target_index: int = 0
) -> Measurement:
    value = wrap_angle(bearing_model(robot.position, robot.heading, target.position) + noise)
    return Measurement(value, MeasurementKind.BEARING, robot_index, target_index)


def measure(
    robot: RobotState,
    target: TargetState,
    rng: np.random.Generator,
    config: "ScenarioConfig",
    robot_index: int = 0,
    target_index: int = 0,
) -> List[Measurement]:
    """Measurements of ``target`` by an assigned ``robot``.

    Sufficient robots return [Range, Bearing]; limited robots return their
    configured modality only. Noise is drawn range first, then bearing.
    """
    if robot.is_sufficient:
        range_noise = rng.normal(0.0, 1.0) * config.range_noise_sigma
        bearing_noise = rng.normal(0.0, 1.0) * config.bearing_noise_sigma
        return [
            range_measurement(robot, target, range_noise, robot_index, target_index),
            bearing_measurement(robot, target, bearing_noise, robot_index, target_index),
        ]
    if config.limited_sensor_kind == LimitedSensorKind.RANGE_ONLY:
        noise = rng.normal(0.0, 1.0) * config.range_noise_sigma
        return [range_measurement(robot, target, noise, robot_index, target_index)]
    noise = rng.normal(0.0, 1.0) * config.bearing_noise_sigma
    return [bearing_measurement(robot, target, noise, robot_index, target_index)]
