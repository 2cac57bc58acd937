"""Orthogonal experiment design over five four-level factors.

The 16-run array is built from two orthogonal Latin squares over GF(4).
Run ``r = 4*i + j`` (i, j in 0..3) has level indices
``[i, j, i+j, i+2j, i+3j]`` with GF(4) arithmetic, where the elements
0, 1, 2, 3 stand for 0, 1, a, a^2 (a^2 = a + 1) and addition is XOR.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
import itertools
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

from forecast_direction_audit.activations import ActivationKind
from forecast_direction_audit.errors import IncompletePlan
from forecast_direction_audit.errors import InvalidFactorTable
from forecast_direction_audit.errors import MalformedArray


LEVELS = 4
FACTOR_COUNT = 5
RUNS = LEVELS * LEVELS
FACTOR_NAMES = ("L", "H", "N", "E", "F")
PLAN_COLUMNS = ("plan_row",) + FACTOR_NAMES
# plan_row of assignments that are not rows of the array (recommendations)
UNPLANNED_ROW = -1

# multiplication in GF(4); addition is XOR
_GF4_MUL = (
    (0, 0, 0, 0),
    (0, 1, 2, 3),
    (0, 2, 3, 1),
    (0, 3, 1, 2),
)


@dataclass(frozen=True)
class OrthogonalArray:
    rows: Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True)
class OrthogonalityReport:
    passed: bool
    violation: Optional[str] = None
    columns: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class FactorTable:
    """Four ordered levels for each of L, H, N, E and F."""

    window_lengths: Tuple[int, ...]
    hops: Tuple[int, ...]
    hidden_nodes: Tuple[int, ...]
    epochs: Tuple[int, ...]
    activations: Tuple[ActivationKind, ...]

    def __post_init__(self) -> None:
        for name, levels in zip(FACTOR_NAMES, self.columns()):
            if len(levels) != LEVELS:
                raise InvalidFactorTable(f"factor {name} needs exactly {LEVELS} levels, got {len(levels)}")
            if len(set(levels)) != LEVELS:
                raise InvalidFactorTable(f"factor {name} has repeated levels: {list(levels)}")
        for name, levels, minimum in (("L", self.window_lengths, 1), ("H", self.hops, 0),
                                      ("N", self.hidden_nodes, 1), ("E", self.epochs, 0)):
            if any(not isinstance(v, int) or isinstance(v, bool) or v < minimum for v in levels):
                raise InvalidFactorTable(f"factor {name} levels must be integers >= {minimum}: {list(levels)}")

    def columns(self) -> Tuple[Tuple, ...]:
        return (self.window_lengths, self.hops, self.hidden_nodes, self.epochs, self.activations)

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Sequence]) -> "FactorTable":
        """Build from ``{"L": [...], "H": [...], "N": [...], "E": [...], "F": [...]}``."""
        missing = [name for name in FACTOR_NAMES if name not in mapping]
        if missing:
            raise InvalidFactorTable(f"factor table lacks {', '.join(missing)}")
        unknown = sorted(set(mapping) - set(FACTOR_NAMES))
        if unknown:
            raise InvalidFactorTable(f"unknown factors {', '.join(unknown)}")
        try:
            activations = tuple(ActivationKind.parse(str(v)) for v in mapping["F"])
        except ValueError as exc:
            raise InvalidFactorTable(str(exc))
        return cls(
            window_lengths=tuple(mapping["L"]),
            hops=tuple(mapping["H"]),
            hidden_nodes=tuple(mapping["N"]),
            epochs=tuple(mapping["E"]),
            activations=activations,
        )


DEFAULT_FACTORS = FactorTable(
    window_lengths=(5, 10, 15, 20),
    hops=(0, 1, 2, 3),
    hidden_nodes=(5, 10, 15, 20),
    epochs=(10, 50, 200, 1000),
    activations=(ActivationKind.LINEAR, ActivationKind.SIGMOID, ActivationKind.TANH, ActivationKind.RELU),
)


@dataclass(frozen=True)
class FactorAssignment:
    window_length: int
    hop: int
    hidden_nodes: int
    epochs: int
    activation: ActivationKind
    plan_row: int

    def values(self) -> Tuple:
        return (self.window_length, self.hop, self.hidden_nodes, self.epochs, self.activation)


@dataclass(frozen=True)
class FactorRange:
    factor: str
    level_means: Tuple[float, ...]
    range: float
    best_level: int


@dataclass(frozen=True)
class RangeAnalysis:
    factors: Tuple[FactorRange, ...]
    recommended: FactorAssignment

    def ranking(self) -> List[str]:
        """Factor names by descending range; ties keep factor order."""
        return [f.factor for f in sorted(self.factors, key=lambda f: -f.range)]

    def by_name(self, name: str) -> FactorRange:
        return next(f for f in self.factors if f.factor == name)


def l16_4_5() -> OrthogonalArray:
    rows = []
    for i in range(LEVELS):
        for j in range(LEVELS):
            rows.append((i, j, i ^ j, i ^ _GF4_MUL[2][j], i ^ _GF4_MUL[3][j]))
    return OrthogonalArray(tuple(rows))


def full_factorial_size(factors: FactorTable = DEFAULT_FACTORS) -> int:
    size = 1
    for levels in factors.columns():
        size *= len(levels)
    return size


def verify_orthogonality(array: OrthogonalArray) -> OrthogonalityReport:
    """Check level balance per column and pair coverage per column pair.

    Raises:
        MalformedArray: not 16 rows of 5 level indices in 0..3.
    """
    rows = array.rows
    if len(rows) != RUNS or any(len(row) != FACTOR_COUNT for row in rows):
        raise MalformedArray(f"expected {RUNS} rows of {FACTOR_COUNT} levels")
    if any(not isinstance(v, int) or not 0 <= v < LEVELS for row in rows for v in row):
        raise MalformedArray(f"level indices must lie in 0..{LEVELS - 1}")

    for column in range(FACTOR_COUNT):
        counts = [sum(1 for row in rows if row[column] == level) for level in range(LEVELS)]
        if counts != [RUNS // LEVELS] * LEVELS:
            return OrthogonalityReport(False, f"column {column} level counts {counts}", (column,))
    for first, second in itertools.combinations(range(FACTOR_COUNT), 2):
        pairs = {(row[first], row[second]) for row in rows}
        if len(pairs) != RUNS:
            return OrthogonalityReport(
                False, f"columns {first} and {second} cover {len(pairs)} of {RUNS} level pairs", (first, second)
            )
    return OrthogonalityReport(True)


def assignment_from_levels(factors: FactorTable, levels: Sequence[int], plan_row: int) -> FactorAssignment:
    values = [column[level] for column, level in zip(factors.columns(), levels)]
    return FactorAssignment(*values, plan_row=plan_row)


def levels_of(factors: FactorTable, assignment: FactorAssignment) -> Tuple[int, ...]:
    return tuple(column.index(value) for column, value in zip(factors.columns(), assignment.values()))


def generate_plan(factors: FactorTable = DEFAULT_FACTORS) -> List[FactorAssignment]:
    return [assignment_from_levels(factors, row, index) for index, row in enumerate(l16_4_5().rows)]


def range_analysis(results: Sequence[Tuple[FactorAssignment, float]], factors: FactorTable = DEFAULT_FACTORS) -> RangeAnalysis:
    """Level means, ranges and the recommended assignment (lower response is better).

    Raises:
        IncompletePlan: rows missing or repeated.
    """
    rows = sorted(r.plan_row for r, _ in results)
    if rows != list(range(RUNS)):
        raise IncompletePlan(f"range analysis needs plan rows 0..{RUNS - 1} exactly once, got {rows}")
    design = l16_4_5().rows

    summaries = []
    best_levels = []
    for column, name in enumerate(FACTOR_NAMES):
        totals = [0.0] * LEVELS
        counts = [0] * LEVELS
        for assignment, response in results:
            level = design[assignment.plan_row][column]
            totals[level] += response
            counts[level] += 1
        means = tuple(total / count for total, count in zip(totals, counts))
        # min() returns the first minimum, i.e. the lowest level index on ties
        best = min(range(LEVELS), key=lambda level: means[level])
        best_levels.append(best)
        summaries.append(FactorRange(name, means, max(means) - min(means), best))

    recommended = assignment_from_levels(factors, best_levels, plan_row=UNPLANNED_ROW)
    return RangeAnalysis(tuple(summaries), recommended)


def write_plan_csv(plan: Sequence[FactorAssignment], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(PLAN_COLUMNS)
    for a in plan:
        writer.writerow([a.plan_row, a.window_length, a.hop, a.hidden_nodes, a.epochs, a.activation.value])


def read_plan_csv(stream) -> List[FactorAssignment]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or tuple(reader.fieldnames) != PLAN_COLUMNS:
        raise IncompletePlan(f"plan CSV header must be {','.join(PLAN_COLUMNS)}")
    plan = []
    for row in reader:
        plan.append(FactorAssignment(
            window_length=int(row["L"]),
            hop=int(row["H"]),
            hidden_nodes=int(row["N"]),
            epochs=int(row["E"]),
            activation=ActivationKind.parse(row["F"]),
            plan_row=int(row["plan_row"]),
        ))
    return plan
