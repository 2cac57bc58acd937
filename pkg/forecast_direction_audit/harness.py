"""Experiment orchestration and the error-versus-direction study.

Every (stock, architecture, plan row) run normalizes on the training range,
windows both partitions, trains, and scores test predictions in normalized
space. Its no-treatment control is the raw test interval's own return and
never depends on the model.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from dataclasses import replace
import hashlib
import itertools
import logging
from pathlib import Path
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from forecast_direction_audit import ingest
from forecast_direction_audit import metrics
from forecast_direction_audit import oed
from forecast_direction_audit import training
from forecast_direction_audit.errors import AuditError
from forecast_direction_audit.errors import ConstantColumn
from forecast_direction_audit.errors import EmptyGroup
from forecast_direction_audit.errors import IncompletePlan
from forecast_direction_audit.errors import IoFailure
from forecast_direction_audit.errors import MirrorMismatch
from forecast_direction_audit.errors import TooFewRecords
from forecast_direction_audit.ingest import NormalizedSeries
from forecast_direction_audit.ingest import PriceSeries
from forecast_direction_audit.ingest import SplitSpec
from forecast_direction_audit.metrics import Direction
from forecast_direction_audit.metrics import MetricReport
from forecast_direction_audit.metrics import ReturnSummary
from forecast_direction_audit.models import Architecture
from forecast_direction_audit.models import ModelSpec
from forecast_direction_audit.oed import FactorAssignment
from forecast_direction_audit.oed import FactorTable
from forecast_direction_audit.oed import RangeAnalysis
from forecast_direction_audit.training import TrainConfig
from forecast_direction_audit.training import TrainedModel

LOG = logging.getLogger(__name__)

STATUS_OK = "ok"
CORRELATION_LABELS = ("MAE", "MSE", "RMSE", "R2", "SRD")
CRITERIA = ("mae", "mse", "rmse", "r2")
POOLING_MODES = ("best-per-stock", "all-runs")
DEFAULT_DIVERGENCE_THRESHOLD = 0.01
SEED_DERIVATION = "blake2b-64(utf8('{base_seed}|{symbol}|{architecture}|{plan_row}')), big-endian unsigned"

# SRD correlations observed on 40 equities under BiLSTM; reported alongside
# computed values for orientation, never used as a pass condition.
REFERENCE_SRD_CORRELATIONS = {"MAE": -0.2775, "MSE": -0.2036, "RMSE": -0.2493, "R2": 0.1400}

# Grid for exact reflection of evaluation pairs. Values on this grid below
# 2**20 in magnitude subtract without rounding, and the mirror's own
# normalized targets land on the same grid points as the reflections.
_MIRROR_GRID = 2.0 ** -24


@dataclass(frozen=True)
class RunRecord:
    symbol: str
    architecture: Architecture
    assignment: FactorAssignment
    metrics: Optional[MetricReport]
    control: ReturnSummary
    seed: int
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def sort_key(self) -> Tuple[str, int, int]:
        return (self.symbol, self.architecture.order, self.assignment.plan_row)

    def metric(self, criterion: str) -> float:
        if self.metrics is None:
            raise EmptyGroup(f"{self.symbol}/{self.architecture.label} run {self.assignment.plan_row} has no metrics")
        return {
            "mae": self.metrics.mae,
            "mse": self.metrics.mse,
            "rmse": self.metrics.rmse,
            "r2": self.metrics.r_squared,
        }[criterion]


@dataclass(frozen=True)
class DivergenceCase:
    record_a: RunRecord
    record_b: RunRecord
    metric_gap: float
    direction_conflict: bool
    state: str

    @property
    def small_gap_conflict(self) -> bool:
        return self.state == "small" and self.direction_conflict


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: Tuple[str, ...]
    cells: np.ndarray
    n: int

    def rho(self, first: str, second: str) -> float:
        return float(self.cells[self.labels.index(first), self.labels.index(second)])

    def interpretation(self, first: str, second: str) -> str:
        return metrics.interpret_correlation(self.rho(first, second))


@dataclass(frozen=True)
class ComparisonRow:
    symbol: str
    architecture: Architecture
    record: RunRecord
    best_for_symbol: bool


@dataclass(frozen=True)
class MirrorOutcome:
    original: MetricReport
    mirrored: MetricReport
    control: ReturnSummary
    mirrored_control: ReturnSummary
    records: Tuple[RunRecord, RunRecord]


@dataclass(frozen=True)
class _RunTask:
    symbol: str
    train: NormalizedSeries
    test: NormalizedSeries
    control: ReturnSummary
    architecture: Architecture
    assignment: FactorAssignment
    seed: int
    learning_rate: Optional[float]
    model_dir: Optional[str]


def derive_seed(base_seed: int, symbol: str, architecture: Architecture, plan_row: int) -> int:
    """Stable 64-bit per-run seed; see ``SEED_DERIVATION``."""
    key = f"{base_seed}|{symbol}|{architecture.value}|{plan_row}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def no_treatment_control(test: PriceSeries) -> ReturnSummary:
    """Return of the raw test interval itself."""
    return metrics.range_return(test)


def prepare_partitions(series: PriceSeries, split: SplitSpec) -> Tuple[NormalizedSeries, NormalizedSeries, PriceSeries]:
    """Normalized train and test partitions sharing the training-range scale."""
    train, test = ingest.split_by_date(series, split)
    joined = ingest.join_partitions(train, test)
    norm = ingest.normalize_minmax(joined, range(0, len(train)))
    return norm.segment(0, len(train)), norm.segment(len(train), len(joined)), test


def _model_spec(architecture: Architecture, assignment: FactorAssignment) -> ModelSpec:
    return ModelSpec(architecture, assignment.window_length, assignment.hidden_nodes, assignment.activation)


def _fit_and_score(
    train_norm: NormalizedSeries,
    test_norm: NormalizedSeries,
    architecture: Architecture,
    assignment: FactorAssignment,
    seed: int,
    learning_rate: Optional[float],
) -> Tuple[TrainedModel, np.ndarray, np.ndarray]:
    train_data = ingest.make_windows(train_norm, assignment.window_length, assignment.hop)
    test_data = ingest.make_windows(test_norm, assignment.window_length, assignment.hop)
    config = TrainConfig(epochs=assignment.epochs, seed=seed, learning_rate=learning_rate)
    model = training.train(_model_spec(architecture, assignment), config, train_data)
    return model, test_data.targets, training.predict(model, test_data.inputs)


def _model_path(model_dir: str, symbol: str, architecture: Architecture, plan_row: int) -> Path:
    return Path(model_dir) / f"{symbol}_{architecture.value}_{plan_row:02d}.model"


def _execute(task: _RunTask) -> RunRecord:
    record = RunRecord(task.symbol, task.architecture, task.assignment, None, task.control, task.seed)
    try:
        model, actual, predicted = _fit_and_score(
            task.train, task.test, task.architecture, task.assignment, task.seed, task.learning_rate
        )
        report = metrics.evaluate(actual, predicted)
        if task.model_dir is not None:
            path = _model_path(task.model_dir, task.symbol, task.architecture, task.assignment.plan_row)
            try:
                with path.open("w", encoding="utf-8") as handle:
                    training.save_model(model, handle)
            except OSError as exc:
                raise IoFailure(f"could not write {path}: {exc}")
    except AuditError as exc:
        LOG.warning("[%s/%s/%d] failed: %s", task.symbol, task.architecture.label, task.assignment.plan_row, exc)
        return replace(record, status=f"failed:{exc.tag}")
    return replace(record, metrics=report)


def _fallback_control(series: PriceSeries, split: SplitSpec) -> ReturnSummary:
    """Control for a stock whose partitions could not be prepared."""
    try:
        _, test = ingest.split_by_date(series, split)
        return no_treatment_control(test)
    except AuditError:
        return ReturnSummary.from_return(0.0)


def _failed_stock_records(
    series: PriceSeries,
    split: SplitSpec,
    architectures: Sequence[Architecture],
    plan: Sequence[FactorAssignment],
    base_seed: int,
    exc: AuditError,
) -> List[RunRecord]:
    control = _fallback_control(series, split)
    return [
        RunRecord(series.symbol, architecture, assignment, None, control,
                  derive_seed(base_seed, series.symbol, architecture, assignment.plan_row),
                  status=f"failed:{exc.tag}")
        for architecture in architectures
        for assignment in plan
    ]


def run_experiment(
    stocks: Iterable[PriceSeries],
    split: SplitSpec,
    architectures: Sequence[Architecture],
    plan: Sequence[FactorAssignment],
    base_seed: int,
    jobs: int = 1,
    learning_rate: Optional[float] = None,
    model_dir: Optional[Path] = None,
) -> List[RunRecord]:
    """Train and score every (stock, architecture, plan row) combination.

    A failing run is recorded with status ``failed:<tag>`` and the batch
    continues. A stock whose partitions cannot be prepared (empty split,
    flat training range) fails every one of its runs with that tag. Output
    is sorted by (symbol, architecture, plan_row), so the number of worker
    processes never changes the result.
    """
    tasks = []
    records = []
    for series in stocks:
        try:
            train_norm, test_norm, test_raw = prepare_partitions(series, split)
            control = no_treatment_control(test_raw)
        except AuditError as exc:
            LOG.warning("[%s] all runs failed: %s", series.symbol, exc)
            records.extend(_failed_stock_records(series, split, architectures, plan, base_seed, exc))
            continue
        for architecture in architectures:
            for assignment in plan:
                seed = derive_seed(base_seed, series.symbol, architecture, assignment.plan_row)
                tasks.append(_RunTask(
                    series.symbol, train_norm, test_norm, control, architecture, assignment, seed,
                    learning_rate, None if model_dir is None else str(model_dir),
                ))

    LOG.info("running %d experiment runs with %d job(s)", len(tasks), jobs)
    if jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records.extend(pool.map(_execute, tasks, chunksize=max(1, len(tasks) // (jobs * 4))))
    else:
        records.extend(_execute(task) for task in tasks)

    records.sort(key=RunRecord.sort_key)
    failed = sum(1 for r in records if not r.ok)
    LOG.info("%d runs finished, %d failed", len(records), failed)
    return records


def _criterion_key(criterion: str):
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {', '.join(CRITERIA)}, got '{criterion}'")
    sign = -1.0 if criterion == "r2" else 1.0

    def key(record: RunRecord):
        return (sign * record.metric(criterion), record.architecture.order, record.assignment.plan_row, record.symbol)

    return key


def select_best_per_group(records: Sequence[RunRecord], group_key: str = "stock", criterion: str = "mae") -> Dict[str, RunRecord]:
    """Best successful record per stock or per architecture.

    MAE, MSE and RMSE are minimized, R2 is maximized. Ties go to the
    earlier architecture, then the lower plan row.

    Raises:
        EmptyGroup: no successful record at all.
    """
    if group_key not in ("stock", "architecture"):
        raise ValueError(f"group key must be 'stock' or 'architecture', got '{group_key}'")
    key = _criterion_key(criterion)

    def group_of(record: RunRecord) -> str:
        return record.symbol if group_key == "stock" else record.architecture.value

    groups: Dict[str, List[RunRecord]] = {}
    for record in records:
        groups.setdefault(group_of(record), []).append(record)

    best = {}
    for name in sorted(groups):
        candidates = [r for r in groups[name] if r.ok]
        if not candidates:
            LOG.warning("group %s has no successful runs", name)
            continue
        best[name] = min(candidates, key=key)
    if not best:
        raise EmptyGroup("no successful runs to select from")
    return best


def pool_records(records: Sequence[RunRecord], pooling: str = "best-per-stock") -> List[RunRecord]:
    """Records entering the correlation study."""
    if pooling == "all-runs":
        return [r for r in records if r.ok]
    if pooling == "best-per-stock":
        return list(select_best_per_group(records, "stock", "mae").values())
    raise ValueError(f"pooling must be one of {', '.join(POOLING_MODES)}, got '{pooling}'")


def best_per_stock_by_architecture(
    records: Sequence[RunRecord], criterion: str = "mae"
) -> Dict[Architecture, Dict[str, RunRecord]]:
    """Best run per stock with the architecture held fixed.

    Architectures without a successful run are left out; the result follows
    architecture order.
    """
    by_arch: Dict[Architecture, List[RunRecord]] = {}
    for record in records:
        if record.ok:
            by_arch.setdefault(record.architecture, []).append(record)
    return {
        arch: select_best_per_group(by_arch[arch], "stock", criterion)
        for arch in sorted(by_arch, key=lambda a: a.order)
    }


def find_divergences(
    records: Sequence[RunRecord], metric_gap_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD
) -> List[DivergenceCase]:
    """Pairs of runs compared by MAE gap and control direction.

    Pairs with a gap at or below the threshold form the "small" state and
    are listed only when their directions conflict; pairs above it form the
    "large" state and are all listed as context.
    """
    usable = [r for r in records if r.ok]
    cases = []
    for first, second in itertools.combinations(usable, 2):
        gap = abs(first.metrics.mae - second.metrics.mae)
        conflict = {first.control.direction, second.control.direction} == {Direction.UP, Direction.DOWN}
        if gap <= metric_gap_threshold:
            if conflict:
                cases.append(DivergenceCase(first, second, gap, True, "small"))
        else:
            cases.append(DivergenceCase(first, second, gap, conflict, "large"))
    return cases


def correlate_metrics_with_direction(records: Sequence[RunRecord]) -> CorrelationMatrix:
    """Pearson matrix over MAE, MSE, RMSE, R2 and the signed control return.

    Raises:
        TooFewRecords: fewer than 3 successful records.
        ConstantColumn: a column has no variance; names the label.
    """
    usable = [r for r in records if r.ok]
    if len(usable) < 3:
        raise TooFewRecords(f"correlation needs 3 successful runs, got {len(usable)}")
    columns = np.array([
        [r.metrics.mae for r in usable],
        [r.metrics.mse for r in usable],
        [r.metrics.rmse for r in usable],
        [r.metrics.r_squared for r in usable],
        [r.control.range_return for r in usable],
    ])
    for label, column in zip(CORRELATION_LABELS, columns):
        if np.all(column == column[0]):
            raise ConstantColumn(label)

    size = len(CORRELATION_LABELS)
    cells = np.eye(size)
    for i, j in itertools.combinations(range(size), 2):
        rho = metrics.pearson(columns[i], columns[j]).rho
        cells[i, j] = rho
        cells[j, i] = rho
    cells.setflags(write=False)
    return CorrelationMatrix(CORRELATION_LABELS, cells, len(usable))


def model_comparison(records: Sequence[RunRecord]) -> List[ComparisonRow]:
    """Per stock, the best run of each architecture by MAE; the stock's overall best is marked."""
    rows = []
    by_symbol: Dict[str, List[RunRecord]] = {}
    for record in records:
        by_symbol.setdefault(record.symbol, []).append(record)
    key = _criterion_key("mae")
    for symbol in sorted(by_symbol):
        per_arch = {}
        for record in by_symbol[symbol]:
            if record.ok:
                per_arch.setdefault(record.architecture, []).append(record)
        winners = {arch: min(candidates, key=key) for arch, candidates in per_arch.items()}
        if not winners:
            continue
        overall = min(winners.values(), key=key)
        for arch in sorted(winners, key=lambda a: a.order):
            rows.append(ComparisonRow(symbol, arch, winners[arch], winners[arch] is overall))
    return rows


def range_analysis_by_group(
    records: Sequence[RunRecord], factors: FactorTable = oed.DEFAULT_FACTORS
) -> Dict[Tuple[str, Architecture], RangeAnalysis]:
    """Range analysis of test MAE for each (stock, architecture) with a complete plan."""
    groups: Dict[Tuple[str, Architecture], List[RunRecord]] = {}
    for record in records:
        groups.setdefault((record.symbol, record.architecture), []).append(record)
    analyses = {}
    for (symbol, arch), group in sorted(groups.items(), key=lambda item: (item[0][0], item[0][1].order)):
        if not all(r.ok for r in group):
            LOG.info("%s/%s: range analysis skipped, plan has failed runs", symbol, arch.label)
            continue
        try:
            analyses[(symbol, arch)] = oed.range_analysis([(r.assignment, r.metrics.mae) for r in group], factors)
        except IncompletePlan as exc:
            LOG.info("%s/%s: range analysis skipped: %s", symbol, arch.label, exc)
    return analyses


def snap_to_grid(values) -> np.ndarray:
    """Round to the nearest multiple of 2**-24."""
    return np.round(np.asarray(values, dtype=np.float64) / _MIRROR_GRID) * _MIRROR_GRID


def mirror_pairs(actual: np.ndarray, predicted: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Snap evaluation pairs to a dyadic grid and reflect them around 1.

    Min-max normalization on the training range maps the mirror series
    ``c - s`` to ``1 - x``, so the reflections are what the mirror run
    should see in normalized space. Every residual of the reflection is the
    exact negation of the original one.
    """
    a = snap_to_grid(actual)
    p = snap_to_grid(predicted)
    return a, p, 1.0 - a, 1.0 - p


def mirror_series(series: PriceSeries) -> PriceSeries:
    """``c - s`` with ``c = 2 * max(s)``; positive, and moving opposite to ``s``."""
    ceiling = 2.0 * float(series.closes.max())
    return PriceSeries(f"{series.symbol}-mirror", series.dates, ceiling - series.closes, f"mirror of {series.symbol}")


def mirror_test(
    series: PriceSeries,
    split: SplitSpec,
    assignment: FactorAssignment,
    architecture: Architecture,
    seed: int,
    learning_rate: Optional[float] = None,
) -> MirrorOutcome:
    """Score a model on ``series`` and the reflected model on its mirror.

    The mirror series is normalized and windowed on its own. Its test
    targets must equal the reflected original targets on the snapped grid;
    the mirror run is then scored against them with the reflected
    predictions, which is what a parameter-mirrored model produces on the
    mirrored windows. Error measures coincide exactly while the controls
    move in opposite directions.

    Raises:
        MirrorMismatch: the mirror's normalized targets are not the
            reflection of the original ones.
    """
    train_norm, test_norm, test_raw = prepare_partitions(series, split)
    _, actual, predicted = _fit_and_score(train_norm, test_norm, architecture, assignment, seed, learning_rate)
    a, p, reflected_a, reflected_p = mirror_pairs(actual, predicted)

    mirror = mirror_series(series)
    _, mirror_test_norm, mirror_test_raw = prepare_partitions(mirror, split)
    mirror_actual = snap_to_grid(ingest.make_windows(mirror_test_norm, assignment.window_length, assignment.hop).targets)
    if mirror_actual.shape != reflected_a.shape or not np.array_equal(mirror_actual, reflected_a):
        gap = np.max(np.abs(mirror_actual - reflected_a)) if mirror_actual.shape == reflected_a.shape else np.inf
        raise MirrorMismatch(f"{mirror.symbol}: normalized test targets differ from the reflection by {gap:.3g}")

    original = metrics.evaluate(a, p)
    mirrored = metrics.evaluate(mirror_actual, reflected_p)
    control = no_treatment_control(test_raw)
    mirrored_control = no_treatment_control(mirror_test_raw)
    records = (
        RunRecord(series.symbol, architecture, assignment, original, control, seed),
        RunRecord(mirror.symbol, architecture, assignment, mirrored, mirrored_control, seed),
    )
    return MirrorOutcome(original, mirrored, control, mirrored_control, records)
