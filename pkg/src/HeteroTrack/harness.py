"""
Closed-loop simulation: assign, control, move, sense and estimate every step.

Also hosts the greedy/optimal policy comparison, the synthetic-table bound
experiment and the CSV writers used by the command line.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from statistics import fmean
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .assignment import (
    MAX_OPTIMAL_TARGETS,
    MAX_OPTIMAL_UNITS,
    AssignableUnit,
    Assignment,
    BoundMode,
    QualityTable,
    UnitKind,
    enumerate_units,
    greedy_assign,
    greedy_evaluation_budget,
    optimal_assign,
    verify_bound,
)
from .control import solve_pmp
from .errors import CoincidentPositions, InstanceTooLarge, InvariantViolation
from .estimation import EkfBelief, ekf_predict, ekf_update, initial_belief
from .motion import step_robot, step_target, target_velocity
from .observability import NEGATIVE_INFINITY, build_pair_matrix, build_single_robot_matrix, tracking_quality
from .process_manager import run_parallel
from .scenario import ScenarioConfig, build_scenario, scenario_rngs
from .sensing import Measurement, measure
from .state import MeasurementKind, RobotAction, RobotKind, RobotState, SimulationState, WorldState
from .utils import ensure_dir, format_row, rms

CHECKPOINTS = (1, 10, 20, 30, 40, 50, 75, 100)
RATIO_TOLERANCE = 1e-9


class Policy(str, Enum):
    GREEDY = "greedy"
    OPTIMAL = "optimal"
    BOTH = "both"


@dataclass
class TargetRecord:
    target_id: int
    true_position: Tuple[float, float]
    estimated_mean: Tuple[float, float]
    error: float
    cov_trace: float
    unit_id: str = ""
    quality: Optional[float] = None


@dataclass
class RobotRecord:
    robot_id: int
    state: RobotState
    action: RobotAction
    target_id: Optional[int] = None
    pmp_residual: Optional[float] = None
    pmp_converged: Optional[bool] = None


@dataclass
class StepRecord:
    step: int
    targets: List[TargetRecord]
    robots: List[RobotRecord]
    assignment: Dict[int, str]
    greedy_total: float
    optimal_total: Optional[float] = None
    # 平移后的质量 (用于近似比检查), 原始值同样保留
    quality_offset: float = 0.0
    greedy_shifted: Optional[float] = None
    optimal_shifted: Optional[float] = None

    @property
    def ratio(self) -> Optional[float]:
        if self.optimal_shifted is None or self.greedy_shifted is None:
            return None
        return shifted_ratio(self.greedy_shifted, self.optimal_shifted)


@dataclass
class RunSummary:
    policy: Policy
    seed: int
    rmse: Dict[int, Dict[int, float]]
    initial_traces: List[float]
    final_traces: List[float]
    final_ratio: Optional[float] = None
    max_residual: float = 0.0
    mean_residual: float = 0.0
    pmp_solves: int = 0
    pmp_converged: int = 0

    @property
    def converged_fraction(self) -> float:
        return self.pmp_converged / self.pmp_solves if self.pmp_solves else 1.0


@dataclass
class RatioRecord:
    seed: int
    step: int
    greedy_total: float
    optimal_total: float
    quality_offset: float
    greedy_shifted: float
    optimal_shifted: float
    ratio: float


@dataclass
class ComparisonResult:
    ratios: List[RatioRecord] = field(default_factory=list)

    @property
    def min_ratio(self) -> float:
        return min((r.ratio for r in self.ratios), default=1.0)

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.ratios), default=1.0)

    @property
    def mean_ratio(self) -> float:
        return fmean(r.ratio for r in self.ratios) if self.ratios else 1.0


@dataclass
class BoundReport:
    mode: BoundMode
    instances: int
    min_ratio: float
    mean_ratio: float
    max_evaluations: int


def shifted_ratio(greedy_shifted: float, optimal_shifted: float) -> float:
    """greedy / optimal on nonnegative totals; 1 when the optimum is 0."""
    if optimal_shifted <= 0.0:
        return 1.0
    return greedy_shifted / optimal_shifted


def check_optimal_guard(n_units: int, n_targets: int):
    if n_targets > MAX_OPTIMAL_TARGETS or n_units > MAX_OPTIMAL_UNITS:
        raise InstanceTooLarge(
            f"实例过大, 无法穷举最优分配: |units|={n_units} (上限 {MAX_OPTIMAL_UNITS}), "
            f"M={n_targets} (上限 {MAX_OPTIMAL_TARGETS})"
        )


def check_conservation(assignment: Assignment, robots: Sequence[RobotState]):
    """Every robot index is valid, of the right kind, and in at most one unit."""
    assignment.check_invariants()
    for target, unit in assignment.pairs.items():
        for robot in unit.robots:
            if not 0 <= robot < len(robots):
                raise InvariantViolation(f"单元 {unit.label} 引用了不存在的机器人 {robot}")
            expected = RobotKind.SUFFICIENT if unit.kind == UnitKind.SOLO else RobotKind.LIMITED
            if robots[robot].kind != expected:
                raise InvariantViolation(f"单元 {unit.label} 中机器人 {robot} 类型错误 ({robots[robot].kind.value})")


def build_quality_table(
    world: WorldState, beliefs: Sequence[EkfBelief], units: Sequence[AssignableUnit], config: ScenarioConfig
) -> QualityTable:
    """q(unit, target) from current robot states and the estimated target positions.

    A robot sitting exactly on an estimate makes the bearing rows undefined;
    that entry becomes NEGATIVE_INFINITY.
    """
    estimates = [belief.as_target(model) for belief, model in zip(beliefs, world.targets)]

    def quality(unit: AssignableUnit, target: int) -> float:
        try:
            if unit.kind == UnitKind.SOLO:
                matrix = build_single_robot_matrix(world.robots[unit.robots[0]], estimates[target])
            else:
                first, second = (world.robots[i] for i in unit.robots)
                matrix = build_pair_matrix(first, second, estimates[target], config.limited_sensor_kind)
        except CoincidentPositions:
            return NEGATIVE_INFINITY
        return tracking_quality(matrix)

    return QualityTable.from_function(units, range(len(world.targets)), quality)


def reference_trajectory(belief: EkfBelief, target_model, horizon: int, dt: float) -> List[Tuple[float, float]]:
    """Estimated target position rolled forward along the known drift, one point per control step."""
    model = belief.as_target(target_model)
    points = []
    for _ in range(horizon):
        points.append(model.position)
        vx, vy = target_velocity(model)
        model = replace(
            model,
            position=(model.position[0] + vx * dt, model.position[1] + vy * dt),
            phase_time=model.phase_time + dt,
        )
    return points


def _assign(
    policy: Policy, units: List[AssignableUnit], targets: range, table: QualityTable
) -> Tuple[Assignment, StepRecord]:
    greedy, greedy_total = greedy_assign(units, targets, table)
    record = StepRecord(step=0, targets=[], robots=[], assignment={}, greedy_total=greedy_total)
    applied = greedy
    if policy in (Policy.OPTIMAL, Policy.BOTH):
        optimal, optimal_total = optimal_assign(units, targets, table)
        shifted, offset = table.shifted()
        _, greedy_shifted = greedy_assign(units, targets, shifted)
        _, optimal_shifted = optimal_assign(units, targets, shifted)
        record.optimal_total = optimal_total
        record.quality_offset = offset
        record.greedy_shifted = greedy_shifted
        record.optimal_shifted = optimal_shifted
        if policy == Policy.OPTIMAL:
            applied = optimal
    record.assignment = applied.labels()
    return applied, record


def run(config: ScenarioConfig, policy: Union[Policy, str] = Policy.GREEDY) -> Tuple[List[StepRecord], RunSummary]:
    """Simulate ``config.time_steps`` steps under ``policy``.

    Step k: quality table from the current robots and beliefs, assignment,
    one PMP solve per assigned robot (first action applied, unassigned robots
    hold still), noisy target motion, measurements by assigned robots, then
    EKF predict+update. At k = 1 the filters are initialised from the first
    fix instead of being updated.
    """
    policy = Policy(policy)
    world = build_scenario(config)
    _, noise_rng = scenario_rngs(config.seed)
    sim = SimulationState(config, world, noise_rng)
    units = enumerate_units(config.n_sufficient, config.n_limited)
    targets = range(config.n_targets)
    if policy != Policy.GREEDY:
        check_optimal_guard(len(units), config.n_targets)

    sim.beliefs = [initial_belief(t, config.initial_offset, config.initial_variance) for t in world.targets]
    initial_traces = [b.trace for b in sim.beliefs]
    process_cov = (config.process_noise_sigma**2) * np.eye(2)
    variances = {
        MeasurementKind.RANGE: config.range_noise_sigma**2,
        MeasurementKind.BEARING: config.bearing_noise_sigma**2,
    }
    previous_targets: Dict[int, int] = {}
    residuals: List[float] = []
    errors: List[List[float]] = [[] for _ in targets]
    records: List[StepRecord] = []

    logger.info(f"[harness] 开始仿真: policy={policy.value}, seed={config.seed}, steps={config.time_steps}")
    for k in range(1, config.time_steps + 1):
        # (1) quality, (2) assignment
        table = build_quality_table(world, sim.beliefs, units, config)
        assignment, record = _assign(policy, units, targets, table)
        check_conservation(assignment, world.robots)
        sim.assignment = assignment
        if len(assignment.pairs) < config.n_targets:
            unassigned = sorted(set(targets) - set(assignment.pairs))
            logger.warning(f"[harness] step {k}: 目标 {unassigned} 未分配")

        # (3) control
        robot_targets = assignment.target_of_robot()
        robot_records: Dict[int, RobotRecord] = {}
        for robot_index, robot in enumerate(world.robots):
            target_index = robot_targets.get(robot_index)
            if target_index is None:
                sim.warm_starts.pop(robot_index, None)
                action = RobotAction()
                robot_records[robot_index] = RobotRecord(robot_index, robot, action)
            else:
                if previous_targets.get(robot_index) != target_index:
                    sim.warm_starts.pop(robot_index, None)
                reference = reference_trajectory(
                    sim.beliefs[target_index], world.targets[target_index], config.control_horizon, config.dt
                )
                solution = solve_pmp(
                    robot,
                    reference,
                    config.control_horizon,
                    config.dt,
                    max_speed=config.robot_max_speed,
                    relaxation=config.pmp_relaxation,
                    tolerance=config.pmp_tolerance,
                    max_iterations=config.pmp_max_iterations,
                    initial_actions=sim.warm_starts.get(robot_index),
                )
                sim.pmp_solves += 1
                if not solution.converged:
                    sim.pmp_failures += 1
                residuals.append(solution.stationarity_residual)
                action = solution.first_action
                sim.warm_starts[robot_index] = solution.actions[1:] + solution.actions[-1:]
                robot_records[robot_index] = RobotRecord(
                    robot_index, robot, action, target_index, solution.stationarity_residual, solution.converged
                )
            sim.last_actions[robot_index] = action
        previous_targets = robot_targets
        world.robots = [step_robot(r, sim.last_actions[i], config.dt) for i, r in enumerate(world.robots)]
        for robot_index, robot in enumerate(world.robots):
            robot_records[robot_index].state = robot

        # (4) targets move
        target_models = list(world.targets)
        world.targets = [step_target(t, config.dt, noise_rng, config.process_noise_sigma) for t in world.targets]
        sim.advance_clock()

        # (5) measurements, (6) estimation
        for target_index in targets:
            unit = assignment.pairs.get(target_index)
            measurements: List[Measurement] = []
            if unit is not None:
                target = world.targets[target_index]
                for robot_index in unit.robots:
                    robot = world.robots[robot_index]
                    measurements.extend(measure(robot, target, noise_rng, config, robot_index, target_index))
            if k == 1:
                belief = initial_belief(world.targets[target_index], config.initial_offset, config.initial_variance)
            else:
                belief = ekf_predict(sim.beliefs[target_index], target_models[target_index], config.dt, process_cov)
                belief = ekf_update(belief, measurements, world.robots, variances)
            sim.beliefs[target_index] = belief

        # (7) record
        target_records = []
        for target_index in targets:
            true_position = world.targets[target_index].position
            belief = sim.beliefs[target_index]
            error = math.hypot(true_position[0] - belief.mean[0], true_position[1] - belief.mean[1])
            errors[target_index].append(error)
            unit = assignment.pairs.get(target_index)
            target_records.append(
                TargetRecord(
                    target_index,
                    true_position,
                    (float(belief.mean[0]), float(belief.mean[1])),
                    error,
                    belief.trace,
                    unit.label if unit else "",
                    table[(unit, target_index)] if unit else None,
                )
            )
        record.step = k
        record.targets = target_records
        record.robots = [robot_records[i] for i in range(len(world.robots))]
        records.append(record)
        logger.debug(
            f"[harness] step {k}/{config.time_steps}: 分配 {record.assignment}, "
            f"greedy q={record.greedy_total:.6g}, 误差 {[round(t.error, 4) for t in target_records]}"
        )

    rmse = {
        j: {c: rms(errors[j][:c]) for c in CHECKPOINTS if c <= config.time_steps} for j in targets
    }
    summary = RunSummary(
        policy=policy,
        seed=config.seed,
        rmse=rmse,
        initial_traces=initial_traces,
        final_traces=[b.trace for b in sim.beliefs],
        final_ratio=records[-1].ratio if records else None,
        max_residual=max(residuals, default=0.0),
        mean_residual=fmean(residuals) if residuals else 0.0,
        pmp_solves=sim.pmp_solves,
        pmp_converged=sim.pmp_solves - sim.pmp_failures,
    )
    if sim.pmp_failures:
        logger.warning(f"[harness] {sim.pmp_failures}/{sim.pmp_solves} 次 PMP 求解未收敛")
    logger.info(
        f"[harness] 仿真结束: seed={config.seed}, 最终 RMSE "
        f"{ {j: round(v[max(v)], 4) for j, v in rmse.items() if v} }"
    )
    return records, summary


# --- Policy comparison --- #


def _ratio_record(seed: int, record: StepRecord) -> RatioRecord:
    return RatioRecord(
        seed,
        record.step,
        record.greedy_total,
        record.optimal_total,
        record.quality_offset,
        record.greedy_shifted,
        record.optimal_shifted,
        record.ratio,
    )


def _ratio_records(config: ScenarioConfig) -> List[RatioRecord]:
    records, _ = run(config, Policy.BOTH)
    ratios = []
    for record in records:
        ratio = record.ratio
        if not 0.5 - RATIO_TOLERANCE <= ratio <= 1.0 + RATIO_TOLERANCE:
            raise InvariantViolation(
                f"seed={config.seed} step={record.step}: greedy/optimal = {ratio:.9g} 超出 [0.5, 1]"
            )
        ratios.append(_ratio_record(config.seed, record))
    return ratios


def compare_policies(config: ScenarioConfig, seeds: Sequence[int], workers: Optional[int] = 1) -> ComparisonResult:
    """Greedy vs optimal total quality per seed and step, on the shifted (nonnegative) table.

    Every ratio must lie in [0.5, 1]; a ratio outside raises InvariantViolation.
    Seeds run in a process pool when ``workers`` > 1 and are merged in seed order.
    """
    config.validate()
    check_optimal_guard(len(enumerate_units(config.n_sufficient, config.n_limited)), config.n_targets)
    configs = [replace(config, seed=int(seed)) for seed in seeds]
    result = ComparisonResult()
    for seed_ratios in run_parallel(_ratio_records, configs, workers):
        result.ratios.extend(seed_ratios)
    logger.info(
        f"[harness] 策略比较完成: {len(configs)} 个种子, 比值 min={result.min_ratio:.6g}, "
        f"mean={result.mean_ratio:.6g}, max={result.max_ratio:.6g}"
    )
    return result


# --- Synthetic bound experiment --- #


def _random_instance(mode: BoundMode, rng: np.random.Generator) -> Tuple[int, int, int, QualityTable]:
    if mode == BoundMode.SUBMODULAR:
        n_s, n_l, m = 2, 3, int(rng.integers(1, 4))
        units = enumerate_units(n_s, n_l)
        values = rng.uniform(0.0, 1.0, size=(len(units), m))
    else:
        n_s, n_l, m = int(rng.integers(0, 3)), int(rng.integers(0, 6)), int(rng.integers(1, 5))
        units = enumerate_units(n_s, n_l)
        # 重尾且稀疏的非负质量
        values = rng.pareto(1.5, size=(len(units), m)) * (rng.random((len(units), m)) < 0.5)
    table = QualityTable({(u, t): values[i, t] for i, u in enumerate(units) for t in range(m)})
    return n_s, n_l, m, table


def run_bound_experiment(mode: Union[BoundMode, str], instances: int, seed: int = 0) -> BoundReport:
    """Greedy vs exhaustive optimum on random nonnegative tables.

    Raises InvariantViolation on the first instance where greedy falls below
    the mode's factor times the optimum, or exceeds the evaluation budget.
    """
    mode = BoundMode(mode)
    if instances < 1:
        raise ValueError(f"instances 必须 >= 1: {instances}")
    rng = np.random.default_rng(seed)
    ratios = []
    max_evaluations = 0
    for index in range(instances):
        n_s, n_l, m, table = _random_instance(mode, rng)
        units = enumerate_units(n_s, n_l)
        _, greedy_total = greedy_assign(units, range(m), table)
        _, optimal_total = optimal_assign(units, range(m), table)
        if not verify_bound(greedy_total, optimal_total, mode):
            raise InvariantViolation(
                f"实例 {index} (N1={n_s}, N2={n_l}, M={m}): greedy={greedy_total:.9g} < "
                f"{mode.factor:.4g} * optimal={optimal_total:.9g}"
            )
        budget = greedy_evaluation_budget(n_s, n_l, m)
        if table.evaluations > budget:
            raise InvariantViolation(f"实例 {index}: 质量评估 {table.evaluations} 次, 超过上界 {budget}")
        max_evaluations = max(max_evaluations, table.evaluations)
        ratios.append(shifted_ratio(greedy_total, optimal_total))

    report = BoundReport(mode, instances, min(ratios), fmean(ratios), max_evaluations)
    logger.info(
        f"[harness] 界验证 ({mode.value}, 系数 {mode.factor:.4g}): {instances} 个实例全部通过, "
        f"最小比值 {report.min_ratio:.6g}, 平均 {report.mean_ratio:.6g}"
    )
    return report


# --- CSV output --- #


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(format_row(row))
    logger.info(f"[harness] 已写入 {path} ({len(rows)} 行)")


def _ratio_rows(ratios: Sequence[RatioRecord]) -> List[list]:
    return [
        [r.seed, r.step, r.greedy_total, r.optimal_total, r.quality_offset, r.greedy_shifted, r.optimal_shifted, r.ratio]
        for r in ratios
    ]


RATIO_HEADER = ["seed", "step", "greedy_q", "optimal_q", "quality_offset", "greedy_q_shifted", "optimal_q_shifted", "ratio"]
SUMMARY_HEADER = ["metric", "target_id", "step", "value"]
ROBOT_HEADER = [
    "step", "robot_id", "kind", "x", "y", "heading", "v", "omega", "target_id", "pmp_residual", "converged"
]


def write_outputs(records: Sequence[StepRecord], summary: RunSummary, out_dir: Union[str, Path]) -> Path:
    """steps.csv, assignments.csv, robots.csv, summary.csv and (with optimal totals) ratios.csv."""
    out = ensure_dir(out_dir)
    steps, assignments, robot_rows, ratios = [], [], [], []
    for record in records:
        for r in record.robots:
            converged = None if r.pmp_converged is None else int(r.pmp_converged)
            robot_rows.append(
                [
                    record.step, r.robot_id, r.state.kind.value, *r.state.position, r.state.heading,
                    r.action.linear_velocity, r.action.angular_velocity, r.target_id, r.pmp_residual, converged,
                ]
            )
        for t in record.targets:
            steps.append(
                [record.step, t.target_id, *t.true_position, *t.estimated_mean, t.error, t.cov_trace, t.unit_id]
            )
            if t.unit_id:
                robot_ids = ";".join(str(i) for i in AssignableUnit.from_label(t.unit_id).robots)
                assignments.append(
                    [record.step, t.target_id, t.unit_id, robot_ids, t.quality, record.greedy_total, record.optimal_total]
                )
        if record.ratio is not None:
            ratios.append(_ratio_record(summary.seed, record))

    _write_csv(
        out / "steps.csv",
        ["step", "target_id", "true_x", "true_y", "est_x", "est_y", "error_m", "cov_trace", "unit_id"],
        steps,
    )
    _write_csv(
        out / "assignments.csv",
        ["step", "target_id", "unit_id", "robot_ids", "q", "greedy_total", "optimal_total"],
        assignments,
    )
    _write_csv(out / "robots.csv", ROBOT_HEADER, robot_rows)

    rows: List[list] = []
    for target_id, by_step in summary.rmse.items():
        rows.extend(["rmse_m", target_id, step, value] for step, value in by_step.items())
    for target_id, (initial, final) in enumerate(zip(summary.initial_traces, summary.final_traces)):
        rows.append(["cov_trace_initial", target_id, 0, initial])
        rows.append(["cov_trace_final", target_id, len(records), final])
    if summary.final_ratio is not None:
        rows.append(["ratio_final", "", len(records), summary.final_ratio])
    rows.append(["pmp_residual_max", "", "", summary.max_residual])
    rows.append(["pmp_residual_mean", "", "", summary.mean_residual])
    rows.append(["pmp_converged_fraction", "", "", summary.converged_fraction])
    _write_csv(out / "summary.csv", SUMMARY_HEADER, rows)

    if ratios:
        _write_csv(out / "ratios.csv", RATIO_HEADER, _ratio_rows(ratios))
    return out


def write_comparison(result: ComparisonResult, out_dir: Union[str, Path]) -> Path:
    """ratios.csv plus a summary.csv with min/mean/max ratio."""
    out = ensure_dir(out_dir)
    _write_csv(out / "ratios.csv", RATIO_HEADER, _ratio_rows(result.ratios))
    _write_csv(
        out / "summary.csv",
        SUMMARY_HEADER,
        [
            ["ratio_min", "", "", result.min_ratio],
            ["ratio_mean", "", "", result.mean_ratio],
            ["ratio_max", "", "", result.max_ratio],
        ],
    )
    return out
