"""
Lie-derivative observability matrices for one target and the log-det
tracking quality q = log det(O^T O).

Only zeroth and first order Lie derivatives are used. The target state is
its planar position, so every matrix has exactly two columns.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from .errors import CoincidentPositions
from .state import LimitedSensorKind, RobotState, TargetState

NEGATIVE_INFINITY = float("-inf")
DET_FLOOR = 1e-12


class RowLabel(str, Enum):
    RANGE_JAC = "RangeJac"
    BEARING_JAC = "BearingJac"
    LIE_RANGE = "LieRange"
    LIE_BEARING = "LieBearing"


@dataclass(frozen=True)
class ObservabilityMatrix:
    rows: np.ndarray
    row_labels: Tuple[RowLabel, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 2:
            raise ValueError(f"观测矩阵必须是 r x 2, 实际为 {rows.shape}")
        if len(self.row_labels) != rows.shape[0]:
            raise ValueError("row_labels 数量与行数不一致")
        object.__setattr__(self, "rows", rows)

    @property
    def gram(self) -> np.ndarray:
        return self.rows.T @ self.rows


def _offset(robot: RobotState, target: TargetState) -> Tuple[float, float]:
    return (target.position[0] - robot.position[0], target.position[1] - robot.position[1])


def _squared_separation(robot: RobotState, target: TargetState) -> float:
    dx, dy = _offset(robot, target)
    r2 = dx * dx + dy * dy
    if r2 == 0.0:
        raise CoincidentPositions(f"机器人与目标位置重合: {robot.position}")
    return r2


def _drift_terms(target: TargetState) -> Tuple[float, float, float]:
    """(d*phi, sin(phi*t), cos(phi*t))"""
    phi, t = target.angular_rate, target.phase_time
    return target.radius * phi, math.sin(phi * t), math.cos(phi * t)


def range_gradient(robot_position, target_position) -> np.ndarray:
    """d h_r / d y at raw positions."""
    return np.array([target_position[0] - robot_position[0], target_position[1] - robot_position[1]])


def bearing_gradient(robot_position, target_position) -> np.ndarray:
    """d h_b / d y at raw positions."""
    dx = target_position[0] - robot_position[0]
    dy = target_position[1] - robot_position[1]
    r2 = dx * dx + dy * dy
    if r2 == 0.0:
        raise CoincidentPositions(f"机器人与目标位置重合: {tuple(robot_position)}")
    return np.array([-dy / r2, dx / r2])


def range_jacobian(robot: RobotState, target: TargetState) -> np.ndarray:
    return range_gradient(robot.position, target.position)


def bearing_jacobian(robot: RobotState, target: TargetState) -> np.ndarray:
    return bearing_gradient(robot.position, target.position)


def lie_range(robot: RobotState, target: TargetState) -> float:
    """L_g h_r, the range model differentiated along the target drift."""
    dx, dy = _offset(robot, target)
    speed, s, c = _drift_terms(target)
    return -dx * speed * s + dy * speed * c


def lie_bearing(robot: RobotState, target: TargetState) -> float:
    """L_g h_b, the bearing model differentiated along the target drift."""
    dx, dy = _offset(robot, target)
    r2 = _squared_separation(robot, target)
    speed, s, c = _drift_terms(target)
    return (dy * speed * s + dx * speed * c) / r2


def lie_range_row(robot: RobotState, target: TargetState) -> np.ndarray:
    # 对目标位置求导后与机器人位置无关
    speed, s, c = _drift_terms(target)
    return np.array([-speed * s, speed * c])


def lie_bearing_row(robot: RobotState, target: TargetState) -> np.ndarray:
    """Gradient [a, b] of L_g h_b with respect to the target position (quotient rule)."""
    dx, dy = _offset(robot, target)
    r2 = _squared_separation(robot, target)
    speed, s, c = _drift_terms(target)
    numerator = speed * (dy * s + dx * c)
    a = speed * c / r2 - 2.0 * dx * numerator / (r2 * r2)
    b = speed * s / r2 - 2.0 * dy * numerator / (r2 * r2)
    return np.array([a, b])


def build_single_robot_matrix(robot: RobotState, target: TargetState) -> ObservabilityMatrix:
    """4x2 matrix of a sufficient robot: range Jac, bearing Jac, Lie range row, [a, b]."""
    rows = np.vstack(
        [
            range_jacobian(robot, target),
            bearing_jacobian(robot, target),
            lie_range_row(robot, target),
            lie_bearing_row(robot, target),
        ]
    )
    labels = (RowLabel.RANGE_JAC, RowLabel.BEARING_JAC, RowLabel.LIE_RANGE, RowLabel.LIE_BEARING)
    return ObservabilityMatrix(rows, labels)


def build_pair_matrix(
    robot1: RobotState,
    robot2: RobotState,
    target: TargetState,
    sensor_kind: LimitedSensorKind = LimitedSensorKind.RANGE_ONLY,
) -> ObservabilityMatrix:
    """3x2 matrix of a limited pair.

    The third row is [d*cos(phi*t), d*sin(phi*t)] without the phi
    factor the single-robot Lie row carries.
    """
    if sensor_kind == LimitedSensorKind.RANGE_ONLY:
        first, second = range_jacobian(robot1, target), range_jacobian(robot2, target)
        label = RowLabel.RANGE_JAC
    else:
        first, second = bearing_jacobian(robot1, target), bearing_jacobian(robot2, target)
        label = RowLabel.BEARING_JAC
    phi, t = target.angular_rate, target.phase_time
    third = np.array([target.radius * math.cos(phi * t), target.radius * math.sin(phi * t)])
    return ObservabilityMatrix(np.vstack([first, second, third]), (label, label, RowLabel.LIE_RANGE))


def tracking_quality(matrix: Union[ObservabilityMatrix, np.ndarray], det_floor: float = DET_FLOOR) -> float:
    """log det(O^T O), or NEGATIVE_INFINITY when the 2x2 Gram determinant <= det_floor."""
    if isinstance(matrix, ObservabilityMatrix):
        gram = matrix.gram
    else:
        rows = np.asarray(matrix, dtype=float)
        gram = rows.T @ rows
    det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
    if not det > det_floor:
        return NEGATIVE_INFINITY
    return math.log(det)
