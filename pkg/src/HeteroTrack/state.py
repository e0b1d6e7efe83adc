from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, TYPE_CHECKING

import numpy as np
from loguru import logger

from .errors import ConfigError
from .utils import wrap_angle

if TYPE_CHECKING:
    from .scenario import ScenarioConfig  # Avoid circular import for type hinting
    from .estimation import EkfBelief
    from .assignment import Assignment


Vec2 = Tuple[float, float]


class RobotKind(str, Enum):
    SUFFICIENT = "Sufficient"
    LIMITED = "Limited"


class LimitedSensorKind(str, Enum):
    RANGE_ONLY = "RangeOnly"
    BEARING_ONLY = "BearingOnly"


class MeasurementKind(str, Enum):
    RANGE = "Range"
    BEARING = "Bearing"


@dataclass(frozen=True)
class RobotState:
    """Planar unicycle pose. Heading is kept on (-pi, pi]."""

    position: Vec2
    heading: float
    kind: RobotKind = RobotKind.SUFFICIENT

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def is_sufficient(self) -> bool:
        return self.kind == RobotKind.SUFFICIENT


@dataclass(frozen=True)
class RobotAction:
    linear_velocity: float = 0.0
    angular_velocity: float = 0.0

    def clamped(self, max_speed: float) -> "RobotAction":
        v = max(-max_speed, min(max_speed, self.linear_velocity))
        return RobotAction(v, self.angular_velocity)


@dataclass(frozen=True)
class TargetState:
    """Target on a circular track: drift is (-d*phi*sin(phi*t), d*phi*cos(phi*t))."""

    position: Vec2
    radius: float
    angular_rate: float
    phase_time: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"目标圆周半径必须为正: radius={self.radius}")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    def with_position(self, position: Vec2) -> "TargetState":
        return replace(self, position=(float(position[0]), float(position[1])))


@dataclass
class WorldState:
    robots: List[RobotState]
    targets: List[TargetState]
    step: int = 0
    clock: float = 0.0


class SimulationState:
    """Holds the mutable state of one simulation run.

    Only the harness step loop mutates it.
    """

    def __init__(self, config: "ScenarioConfig", world: WorldState, rng: np.random.Generator):
        self.config = config
        self.world = world
        self.rng = rng

        # --- Estimation state --- #
        self.beliefs: List["EkfBelief"] = []

        # --- Assignment / control state --- #
        self.assignment: Optional["Assignment"] = None
        # 上一步的PMP解, 用于热启动 (robot index -> actions)
        self.warm_starts: Dict[int, List["RobotAction"]] = {}
        self.last_actions: Dict[int, "RobotAction"] = {}

        # --- Bookkeeping --- #
        self.pmp_solves: int = 0
        self.pmp_failures: int = 0

    def advance_clock(self):
        """Moves the world one step forward in time."""
        self.world.step += 1
        self.world.clock = self.world.step * self.config.dt
        logger.debug(f"[SimulationState] 时钟推进到 step={self.world.step}, t={self.world.clock:.3f}s")
