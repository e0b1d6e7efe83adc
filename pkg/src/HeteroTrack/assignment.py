"""
Robot-to-target assignment over the transversal matroid of assignable units.

An assignable unit is one sufficient robot (Solo) or an unordered pair of
distinct limited robots (Pair). Robot indices are world indices, so a solo and
a pair never share a robot and two pairs conflict iff they share a limited
robot. Targets form the ground set of the matroid.
"""

import csv
import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from loguru import logger

from .errors import InstanceTooLarge, InvariantViolation
from .observability import NEGATIVE_INFINITY
from .utils import format_float

MAX_OPTIMAL_TARGETS = 6
MAX_OPTIMAL_UNITS = 12


class UnitKind(str, Enum):
    SOLO = "Solo"
    PAIR = "Pair"


class BoundMode(str, Enum):
    ARBITRARY = "arbitrary"
    SUBMODULAR = "submodular"

    @property
    def factor(self) -> float:
        return 1.0 / 3.0 if self == BoundMode.ARBITRARY else 0.5


@dataclass(frozen=True)
class AssignableUnit:
    kind: UnitKind
    robots: Tuple[int, ...]

    def __post_init__(self):
        robots = tuple(int(r) for r in self.robots)
        if self.kind == UnitKind.SOLO and len(robots) != 1:
            raise ValueError(f"Solo 单元必须恰好包含一个机器人: {robots}")
        if self.kind == UnitKind.PAIR:
            if len(robots) != 2 or robots[0] == robots[1]:
                raise ValueError(f"Pair 单元必须包含两个不同的机器人: {robots}")
            robots = tuple(sorted(robots))
        object.__setattr__(self, "robots", robots)

    @classmethod
    def solo(cls, robot: int) -> "AssignableUnit":
        return cls(UnitKind.SOLO, (robot,))

    @classmethod
    def pair(cls, first: int, second: int) -> "AssignableUnit":
        return cls(UnitKind.PAIR, (first, second))

    @property
    def label(self) -> str:
        if self.kind == UnitKind.SOLO:
            return f"S{self.robots[0]}"
        return f"P{self.robots[0]}-{self.robots[1]}"

    @classmethod
    def from_label(cls, label: str) -> "AssignableUnit":
        label = label.strip()
        try:
            if label.startswith("S"):
                return cls.solo(int(label[1:]))
            if label.startswith("P"):
                first, second = label[1:].split("-")
                return cls.pair(int(first), int(second))
        except ValueError as e:
            raise ValueError(f"无法解析单元标识 '{label}': {e}") from e
        raise ValueError(f"无法解析单元标识 '{label}'")

    def conflicts_with(self, other: "AssignableUnit") -> bool:
        return not set(self.robots).isdisjoint(other.robots)


def enumerate_units(n_sufficient: int, n_limited: int) -> List[AssignableUnit]:
    """Solos 0..N1-1 ascending, then limited pairs in lexicographic order."""
    if n_sufficient < 0 or n_limited < 0:
        raise ValueError("机器人数量不能为负数")
    units = [AssignableUnit.solo(i) for i in range(n_sufficient)]
    limited = range(n_sufficient, n_sufficient + n_limited)
    units.extend(AssignableUnit.pair(a, b) for a, b in itertools.combinations(limited, 2))
    return units


@dataclass(frozen=True)
class AssignmentGraph:
    units: Tuple[AssignableUnit, ...]
    targets: Tuple[int, ...]
    edges: FrozenSet[Tuple[AssignableUnit, int]]

    @classmethod
    def complete(cls, units: Sequence[AssignableUnit], targets: Iterable[int]) -> "AssignmentGraph":
        units, targets = tuple(units), tuple(sorted(targets))
        return cls(units, targets, frozenset((u, t) for u in units for t in targets))

    def __post_init__(self):
        unit_set, target_set = set(self.units), set(self.targets)
        for unit, target in self.edges:
            if unit not in unit_set or target not in target_set:
                raise ValueError(f"边引用了不存在的单元或目标: ({unit.label}, {target})")

    def has_edge(self, unit: AssignableUnit, target: int) -> bool:
        return (unit, target) in self.edges

    def neighbours(self, target: int) -> List[AssignableUnit]:
        return [u for u in self.units if (u, target) in self.edges]


@dataclass
class Assignment:
    """Partial matching target -> unit.

    gamma_{i,j} = 1 iff pairs[j] == Solo(i); zeta_{i1,i2,j} = 1 iff
    pairs[j] == Pair(i1, i2). Half-assigned pairs cannot be represented.
    """

    pairs: Dict[int, AssignableUnit] = field(default_factory=dict)

    def robots_used(self) -> Set[int]:
        used: Set[int] = set()
        for unit in self.pairs.values():
            used.update(unit.robots)
        return used

    def assign(self, target: int, unit: AssignableUnit):
        if target in self.pairs:
            raise InvariantViolation(f"目标 {target} 已被分配给 {self.pairs[target].label}")
        if not self.robots_used().isdisjoint(unit.robots):
            raise InvariantViolation(f"单元 {unit.label} 与已分配机器人冲突")
        self.pairs[target] = unit

    def check_invariants(self):
        """Each robot in at most one unit; targets are unique by construction of the dict."""
        seen: Set[int] = set()
        for target, unit in self.pairs.items():
            overlap = seen.intersection(unit.robots)
            if overlap:
                raise InvariantViolation(f"机器人 {sorted(overlap)} 被重复分配 (目标 {target})")
            seen.update(unit.robots)

    def target_of_robot(self) -> Dict[int, int]:
        return {robot: target for target, unit in self.pairs.items() for robot in unit.robots}

    def labels(self) -> Dict[int, str]:
        return {target: unit.label for target, unit in sorted(self.pairs.items())}


class QualityTable:
    """q(unit, target) values; ``value()`` counts evaluations, ``[]`` does not."""

    def __init__(self, values: Optional[Dict[Tuple[AssignableUnit, int], float]] = None):
        self.values: Dict[Tuple[AssignableUnit, int], float] = {}
        self.evaluations = 0
        for key, q in (values or {}).items():
            self[key] = q

    @classmethod
    def from_function(
        cls, units: Sequence[AssignableUnit], targets: Iterable[int], fn: Callable[[AssignableUnit, int], float]
    ) -> "QualityTable":
        targets = list(targets)
        return cls({(u, t): fn(u, t) for u in units for t in targets})

    def __setitem__(self, key: Tuple[AssignableUnit, int], q: float):
        q = float(q)
        if math.isnan(q) or q == math.inf:
            raise ValueError(f"质量值必须是有限数或 -inf: {key[0].label}, {key[1]} -> {q}")
        self.values[key] = q

    def __getitem__(self, key: Tuple[AssignableUnit, int]) -> float:
        return self.values[key]

    def __len__(self) -> int:
        return len(self.values)

    def value(self, unit: AssignableUnit, target: int) -> float:
        self.evaluations += 1
        return self.values[(unit, target)]

    def min_finite(self) -> Optional[float]:
        finite = [q for q in self.values.values() if q != NEGATIVE_INFINITY]
        return min(finite) if finite else None

    def shifted(self) -> Tuple["QualityTable", float]:
        """Subtract the minimum finite entry so every finite entry is >= 0.

        Per-round argmax is unchanged; -inf entries stay -inf.
        """
        offset = self.min_finite() or 0.0
        table = QualityTable(
            {k: (q if q == NEGATIVE_INFINITY else max(0.0, q - offset)) for k, q in self.values.items()}
        )
        return table, offset

    def to_csv(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["unit_id", "target_id", "q"])
            for (unit, target), q in self.values.items():
                writer.writerow([unit.label, target, format_float(q)])
        logger.info(f"[assignment] 质量表已写入: {path} ({len(self.values)} 项)")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "QualityTable":
        table = cls()
        with open(path, "r", newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                q = float(row["q"])  # float() 支持 "-inf"
                table[(AssignableUnit.from_label(row["unit_id"]), int(row["target_id"]))] = q
        logger.info(f"[assignment] 已读取质量表: {path} ({len(table)} 项)")
        return table


# --- Matroid oracles --- #


def _max_cover(graph: AssignmentGraph, targets: Iterable[int]) -> int:
    """Largest number of ``targets`` coverable by robot-disjoint units.

    Exact search over matchings of the conflict-expanded graph: each unit
    consumes its robot(s), so two units may both be used only when their
    robots are disjoint. Memoised on (position, robots used).
    """
    order = sorted(set(targets))
    adjacency = [graph.neighbours(t) for t in order]

    @lru_cache(maxsize=None)
    def best(pos: int, used: FrozenSet[int]) -> int:
        if pos == len(order):
            return 0
        remaining = len(order) - pos
        result = 0
        for unit in adjacency[pos]:
            if used.isdisjoint(unit.robots):
                result = max(result, 1 + best(pos + 1, used | frozenset(unit.robots)))
                if result == remaining:
                    return result
        return max(result, best(pos + 1, used))

    return best(0, frozenset())


def is_independent(graph: AssignmentGraph, subset: Iterable[int]) -> bool:
    subset = set(subset)
    if not subset.issubset(graph.targets):
        raise ValueError(f"子集包含图中不存在的目标: {sorted(subset - set(graph.targets))}")
    return _max_cover(graph, subset) == len(subset)


def rank(graph: AssignmentGraph, subset: Iterable[int]) -> int:
    subset = set(subset)
    if not subset.issubset(graph.targets):
        raise ValueError(f"子集包含图中不存在的目标: {sorted(subset - set(graph.targets))}")
    return _max_cover(graph, subset)


def span(graph: AssignmentGraph, subset: Iterable[int]) -> Set[int]:
    """{ j : rank(S + {j}) == rank(S) }"""
    subset = set(subset)
    base = rank(graph, subset)
    return {j for j in graph.targets if rank(graph, subset | {j}) == base}


# --- Greedy / optimal assignment --- #


def greedy_assign(
    units: Sequence[AssignableUnit],
    targets: Iterable[int],
    quality: QualityTable,
    graph: Optional[AssignmentGraph] = None,
) -> Tuple[Assignment, float]:
    """Greedy assignment: repeatedly take the feasible (unit, target) with maximum q.

    Every round re-evaluates all remaining feasible pairs, adds q_max to the
    total, then removes the target and the unit's robot(s); removing a limited
    robot invalidates every pair containing it. Stops when targets or
    feasible units run out, or every remaining q is -inf. Ties go to the
    lowest unit position in ``units``, then the lowest target index.
    """
    remaining = sorted(set(targets))
    assignment = Assignment()
    used: Set[int] = set()
    total = 0.0
    round_no = 0

    while remaining:
        best: Optional[Tuple[AssignableUnit, int]] = None
        best_q = NEGATIVE_INFINITY
        feasible = [u for u in units if used.isdisjoint(u.robots)]
        if not feasible:
            logger.debug(f"[greedy] 第 {round_no} 轮: 没有可用单元, 剩余目标 {remaining}")
            break
        for unit in feasible:
            for target in remaining:
                if graph is not None and not graph.has_edge(unit, target):
                    continue
                q = quality.value(unit, target)
                if q > best_q:
                    best, best_q = (unit, target), q
        if best is None:
            logger.debug(f"[greedy] 第 {round_no} 轮: 剩余质量全部为 -inf, 停止")
            break

        unit, target = best
        assignment.assign(target, unit)
        assignment.check_invariants()
        total += best_q
        used.update(unit.robots)
        remaining.remove(target)
        logger.debug(f"[greedy] 第 {round_no} 轮: {unit.label} -> 目标 {target}, q={best_q:.6g}")
        round_no += 1

    return assignment, total


def optimal_assign(
    units: Sequence[AssignableUnit],
    targets: Iterable[int],
    quality: QualityTable,
    graph: Optional[AssignmentGraph] = None,
) -> Tuple[Assignment, float]:
    """Exhaustive maximum over robot-disjoint partial assignments (branch and bound).

    -inf entries are unassignable; leaving a target unassigned contributes 0.
    """
    order = sorted(set(targets))
    units = list(units)
    if len(order) > MAX_OPTIMAL_TARGETS or len(units) > MAX_OPTIMAL_UNITS:
        raise InstanceTooLarge(
            f"实例过大: |targets|={len(order)} (上限 {MAX_OPTIMAL_TARGETS}), "
            f"|units|={len(units)} (上限 {MAX_OPTIMAL_UNITS})"
        )

    options: List[List[Tuple[AssignableUnit, float]]] = []
    for target in order:
        choices = []
        for unit in units:
            if graph is not None and not graph.has_edge(unit, target):
                continue
            q = quality[(unit, target)]
            if q != NEGATIVE_INFINITY:
                choices.append((unit, q))
        options.append(choices)
    # 剩余目标的乐观上界, 用于剪枝
    optimistic = [max([0.0] + [q for _, q in choices]) for choices in options]
    suffix_bound = [0.0] * (len(order) + 1)
    for pos in range(len(order) - 1, -1, -1):
        suffix_bound[pos] = suffix_bound[pos + 1] + optimistic[pos]

    best_total = 0.0
    best_pairs: Dict[int, AssignableUnit] = {}
    chosen: Dict[int, AssignableUnit] = {}

    def search(pos: int, used: FrozenSet[int], total: float):
        nonlocal best_total, best_pairs
        if total > best_total:
            best_total, best_pairs = total, dict(chosen)
        if pos == len(order) or total + suffix_bound[pos] <= best_total:
            return
        target = order[pos]
        for unit, q in options[pos]:
            if used.isdisjoint(unit.robots):
                chosen[target] = unit
                search(pos + 1, used | frozenset(unit.robots), total + q)
                del chosen[target]
        search(pos + 1, used, total)

    search(0, frozenset(), 0.0)
    assignment = Assignment(best_pairs)
    assignment.check_invariants()
    return assignment, best_total


def verify_bound(greedy_total: float, optimal_total: float, mode: Union[BoundMode, str]) -> bool:
    """greedy >= factor * optimal - 1e-9*|optimal|, factor 1/3 (arbitrary) or 1/2 (submodular)."""
    mode = BoundMode(mode)
    tol = 1e-9 * abs(optimal_total)
    return greedy_total >= mode.factor * optimal_total - tol


def greedy_evaluation_budget(n_sufficient: int, n_limited: int, n_targets: int) -> int:
    """(N1 + C(N2, 2)) * M^2, the evaluation count bound of the greedy loop."""
    return (n_sufficient + math.comb(n_limited, 2)) * n_targets * n_targets
