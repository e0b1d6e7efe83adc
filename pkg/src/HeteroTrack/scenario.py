"""Scenario configuration, world construction and seeded randomness."""

import math
from dataclasses import dataclass, asdict, fields
from typing import Any, Dict, Tuple

import numpy as np
from loguru import logger

from .errors import ConfigError, InfeasibleScenario, ZeroAngularRate
from .state import LimitedSensorKind, RobotKind, RobotState, TargetState, WorldState


@dataclass
class ScenarioConfig:
    n_sufficient: int = 2
    n_limited: int = 3
    n_targets: int = 2
    time_steps: int = 100
    dt: float = 0.1
    process_noise_sigma: float = 0.2
    range_noise_sigma: float = 0.2
    bearing_noise_sigma: float = 0.2
    target_speed: float = 2.0
    target_angular_rate: float = 0.1
    robot_max_speed: float = 2.0
    seed: int = 0
    limited_sensor_kind: LimitedSensorKind = LimitedSensorKind.RANGE_ONLY
    placement_box_half_width: float = 10.0
    # --- 控制器与滤波器参数 --- #
    control_horizon: int = 10
    pmp_relaxation: float = 0.1
    pmp_tolerance: float = 1e-6
    pmp_max_iterations: int = 500
    initial_offset: float = 0.5
    initial_variance: float = 0.5

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["limited_sensor_kind"] = self.limited_sensor_kind.value
        return data

    def validate(self) -> "ScenarioConfig":
        """Raise ConfigError (or InfeasibleScenario) if an invariant is broken."""
        for name in ("n_sufficient", "n_limited", "n_targets"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} 不能为负数: {getattr(self, name)}")
        if self.time_steps < 1:
            raise ConfigError(f"time_steps 必须 >= 1: {self.time_steps}")
        if not self.dt > 0:
            raise ConfigError(f"dt 必须为正: {self.dt}")
        # sigma = 0 is allowed for noiseless runs
        for name in ("process_noise_sigma", "range_noise_sigma", "bearing_noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} 不能为负数: {getattr(self, name)}")
        if not self.robot_max_speed > 0:
            raise ConfigError(f"robot_max_speed 必须为正: {self.robot_max_speed}")
        if not self.placement_box_half_width > 0:
            raise ConfigError(f"placement_box_half_width 必须为正: {self.placement_box_half_width}")
        if self.seed < 0:
            raise ConfigError(f"seed 必须是无符号整数: {self.seed}")
        if self.control_horizon < 1 or self.pmp_max_iterations < 1:
            raise ConfigError("control_horizon 与 pmp_max_iterations 必须 >= 1")
        if not 0 < self.pmp_relaxation <= 1:
            raise ConfigError(f"pmp_relaxation 必须在 (0, 1] 内: {self.pmp_relaxation}")
        if not self.initial_variance > 0:
            raise ConfigError(f"initial_variance 必须为正: {self.initial_variance}")
        if not isinstance(self.limited_sensor_kind, LimitedSensorKind):
            raise ConfigError(f"未知的 limited_sensor_kind: {self.limited_sensor_kind!r}")
        derive_target_radius(self.target_speed, self.target_angular_rate)

        capacity = self.n_sufficient + self.n_limited // 2
        if capacity < self.n_targets:
            raise InfeasibleScenario(
                f"机器人不足: |R_s| + floor(|R_l|/2) = {capacity} < M = {self.n_targets}"
            )
        return self


def derive_target_radius(speed: float, angular_rate: float) -> float:
    """Radius of the circular track from tangential speed and angular rate (v = d*phi)."""
    if angular_rate == 0:
        raise ZeroAngularRate("target_angular_rate 不能为 0")
    radius = speed / abs(angular_rate)
    if not radius > 0:
        raise ConfigError(f"目标圆周半径必须为正: speed={speed}, angular_rate={angular_rate}")
    return radius


def scenario_rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (placement, noise) generators derived from one seed."""
    placement_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(placement_seq), np.random.default_rng(noise_seq)


def build_scenario(config: ScenarioConfig) -> WorldState:
    """Place robots and targets uniformly in the square of the configured half-width.

    The first ``n_sufficient`` robots are sufficient-sensing, the rest limited.
    Each target starts at a uniform position with a uniform random phase on
    its circular track. Same config and seed give the same world.
    """
    config.validate()
    rng, _ = scenario_rngs(config.seed)
    half_width = config.placement_box_half_width
    radius = derive_target_radius(config.target_speed, config.target_angular_rate)
    period = 2.0 * math.pi / abs(config.target_angular_rate)

    robots = []
    for i in range(config.n_sufficient + config.n_limited):
        x, y = rng.uniform(-half_width, half_width, size=2)
        heading = rng.uniform(-math.pi, math.pi)
        kind = RobotKind.SUFFICIENT if i < config.n_sufficient else RobotKind.LIMITED
        robots.append(RobotState((x, y), heading, kind))

    targets = []
    for _ in range(config.n_targets):
        x, y = rng.uniform(-half_width, half_width, size=2)
        phase_time = rng.uniform(0.0, period)
        targets.append(TargetState((x, y), radius, config.target_angular_rate, phase_time))

    logger.info(
        f"[scenario] 场景已生成: N1={config.n_sufficient}, N2={config.n_limited}, "
        f"M={config.n_targets}, seed={config.seed}, d_j={radius:.3f} m"
    )
    return WorldState(robots=robots, targets=targets, step=0, clock=0.0)
