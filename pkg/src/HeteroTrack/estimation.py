"""Per-target extended Kalman filter over the planar target position.

The circular drift parameters (d_j, phi_j, phase) are known to the filter;
only the position is estimated.
"""

from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .errors import SingularInnovationCovariance
from .motion import target_velocity
from .observability import bearing_gradient, range_gradient
from .sensing import Measurement, bearing_model, range_model
from .state import MeasurementKind, RobotState, TargetState
from .utils import wrap_angle

# 滤波器内部测量方差下限, 保证无噪声仿真时 S 仍可逆
MIN_MEASUREMENT_VARIANCE = 1e-9
# eigenvalues above this (negative) value are clamped to zero
PSD_TOLERANCE = -1e-10
# 迭代更新 (重新线性化) 的次数上限与收敛步长
MAX_UPDATE_ITERATIONS = 10
UPDATE_STEP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class EkfBelief:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(2))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float).reshape(2, 2))

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))

    def as_target(self, model: TargetState) -> TargetState:
        """The target model with its position replaced by the estimated mean."""
        return model.with_position((self.mean[0], self.mean[1]))


def initial_belief(target: TargetState, offset: float = 0.5, variance: float = 0.5) -> EkfBelief:
    """Belief at the true position shifted by (offset, offset) with covariance variance*I."""
    mean = np.array(target.position) + offset
    return EkfBelief(mean, variance * np.eye(2))


def _clean_covariance(covariance: np.ndarray) -> np.ndarray:
    """Re-symmetrise and clamp small negative eigenvalues."""
    covariance = 0.5 * (covariance + covariance.T)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    if eigenvalues.min() < 0.0:
        if eigenvalues.min() < PSD_TOLERANCE:
            logger.warning(f"[ekf] 协方差出现负特征值 {eigenvalues.min():.3e}, 已截断")
        eigenvalues = np.clip(eigenvalues, 0.0, None)
        covariance = (eigenvectors * eigenvalues) @ eigenvectors.T
        covariance = 0.5 * (covariance + covariance.T)
    return covariance


def ekf_predict(belief: EkfBelief, target_model: TargetState, dt: float, process_cov: np.ndarray) -> EkfBelief:
    """Propagate the mean with the known drift; covariance += Q*dt (identity state Jacobian)."""
    if not dt > 0:
        raise ValueError(f"dt 必须为正: {dt}")
    vx, vy = target_velocity(target_model)
    mean = belief.mean + np.array([vx, vy]) * dt
    covariance = _clean_covariance(belief.covariance + np.asarray(process_cov, dtype=float) * dt)
    return EkfBelief(mean, covariance)


def _measurement_noise(
    measurements: Sequence[Measurement], variances: Union[Mapping[MeasurementKind, float], Sequence[float]]
) -> np.ndarray:
    diagonal = []
    for row, m in enumerate(measurements):
        variance = variances[m.kind] if isinstance(variances, Mapping) else variances[row]
        diagonal.append(max(float(variance), MIN_MEASUREMENT_VARIANCE))
    return np.diag(diagonal)


def _linearize(
    measurements: Sequence[Measurement], robots: Sequence[RobotState], point: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked Jacobian at ``point`` and the residual z - h(point); bearing residuals wrapped."""
    H = np.zeros((len(measurements), 2))
    residual = np.zeros(len(measurements))
    for row, m in enumerate(measurements):
        robot = robots[m.robot_index]
        if m.kind == MeasurementKind.RANGE:
            H[row] = range_gradient(robot.position, point)
            residual[row] = m.value - range_model(robot.position, point)
        else:
            H[row] = bearing_gradient(robot.position, point)
            residual[row] = wrap_angle(m.value - bearing_model(robot.position, robot.heading, point))
    return H, residual


def _gain(P: np.ndarray, H: np.ndarray, R: np.ndarray) -> np.ndarray:
    S = H @ P @ H.T + R
    try:
        if np.linalg.cond(S) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        return np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as e:
        raise SingularInnovationCovariance(f"新息协方差 S 不可逆: {e}") from e


def ekf_update(
    belief: EkfBelief,
    measurements: Sequence[Measurement],
    robots: Sequence[RobotState],
    variances: Union[Mapping[MeasurementKind, float], Sequence[float]],
    max_iterations: int = MAX_UPDATE_ITERATIONS,
) -> EkfBelief:
    """Stacked iterated EKF update, Joseph form.

    ``variances`` is either a per-kind mapping or one variance per measurement.
    The measurement model is relinearised about the current estimate,
    x_{i+1} = x_prior + K_i (z - h(x_i) - H_i (x_prior - x_i)), until the step
    falls below UPDATE_STEP_TOLERANCE or ``max_iterations`` is reached. The
    covariance uses the last H and K. One iteration is the plain EKF update.
    """
    if not measurements:
        return belief
    if max_iterations < 1:
        raise ValueError(f"max_iterations 必须 >= 1: {max_iterations}")

    prior = belief.mean
    P = belief.covariance
    R = _measurement_noise(measurements, variances)

    estimate = prior
    for iteration in range(1, max_iterations + 1):
        H, residual = _linearize(measurements, robots, estimate)
        gain = _gain(P, H, R)
        updated = prior + gain @ (residual - H @ (prior - estimate))
        step = float(np.linalg.norm(updated - estimate))
        estimate = updated
        if step <= UPDATE_STEP_TOLERANCE:
            break
    logger.debug(f"[ekf] 迭代更新 {iteration} 次, 最后步长 {step:.3e}")

    identity_minus_kh = np.eye(2) - gain @ H
    covariance = identity_minus_kh @ P @ identity_minus_kh.T + gain @ R @ gain.T
    return EkfBelief(estimate, _clean_covariance(covariance))
