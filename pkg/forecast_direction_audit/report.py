"""Results CSV and report files.

All writers are byte-deterministic: rows follow the record order handed in,
reals use 17 significant digits in CSV files, and nothing time-dependent is
written.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
import io
import logging
from pathlib import Path
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import TextIO
from typing import Tuple

from forecast_direction_audit import harness
from forecast_direction_audit import oed
from forecast_direction_audit.activations import ActivationKind
from forecast_direction_audit.errors import AuditError
from forecast_direction_audit.errors import IoFailure
from forecast_direction_audit.errors import MalformedRow
from forecast_direction_audit.harness import CorrelationMatrix
from forecast_direction_audit.harness import DivergenceCase
from forecast_direction_audit.harness import RunRecord
from forecast_direction_audit.metrics import Direction
from forecast_direction_audit.metrics import MetricReport
from forecast_direction_audit.metrics import ReturnSummary
from forecast_direction_audit.models import Architecture
from forecast_direction_audit.oed import FactorAssignment
from forecast_direction_audit.oed import FactorTable

LOG = logging.getLogger(__name__)

RESULTS_COLUMNS = (
    "symbol", "architecture", "plan_row", "L", "H", "N", "E", "F", "seed",
    "mae", "mse", "rmse", "r2", "control_return_pct", "direction", "status",
)
RUNS_COLUMNS = (
    "symbol", "architecture", "plan_row", "mae", "mse", "rmse", "r2",
    "control_return_pct", "direction", "srd_sign", "status",
)
DIVERGENCE_COLUMNS = (
    "state", "direction_conflict", "metric_gap",
    "symbol_a", "architecture_a", "plan_row_a", "mae_a", "return_pct_a", "direction_a",
    "symbol_b", "architecture_b", "plan_row_b", "mae_b", "return_pct_b", "direction_b",
)
COMPARISON_COLUMNS = ("symbol", "architecture", "plan_row", "mae", "mse", "rmse", "r2", "best")
BEST_BY_ARCHITECTURE_COLUMNS = (
    "architecture", "symbol", "plan_row", "mae", "mse", "rmse", "r2", "control_return_pct", "direction",
)
ARCHITECTURE_DIVERGENCE_COLUMNS = ("architecture",) + DIVERGENCE_COLUMNS
RANGE_COLUMNS = (
    "symbol", "architecture", "factor", "mean_level1", "mean_level2", "mean_level3", "mean_level4",
    "range", "best_level", "best_value",
)
CSV_FILES = (
    "runs.csv", "divergences.csv", "correlation.csv", "correlation_bands.txt",
    "summary.txt", "model_comparison.csv", "range_analysis.csv",
    "best_by_architecture.csv", "divergences_by_architecture.csv",
)
MARKDOWN_FILE = "report.md"


@dataclass(frozen=True)
class ReportInputs:
    """Everything a report renders, derived once so both formats agree."""

    records: Tuple[RunRecord, ...]
    divergences: Tuple[DivergenceCase, ...]
    matrix: Optional[CorrelationMatrix]
    pooling: str
    factors: FactorTable = oed.DEFAULT_FACTORS
    correlation_note: str = ""
    best_by_architecture: Tuple[Tuple[Architecture, Tuple[RunRecord, ...]], ...] = ()
    divergences_by_architecture: Tuple[Tuple[Architecture, Tuple[DivergenceCase, ...]], ...] = ()

    @property
    def failed(self) -> int:
        return sum(1 for r in self.records if not r.ok)


def assemble(
    records: Sequence[RunRecord],
    pooling: str = "best-per-stock",
    divergence_threshold: float = harness.DEFAULT_DIVERGENCE_THRESHOLD,
    factors: FactorTable = oed.DEFAULT_FACTORS,
) -> ReportInputs:
    """Divergences over the best run per stock and the pooled correlation.

    Pooled divergences compare each stock's overall best run whatever its
    architecture. The per-architecture lists hold the model fixed and
    compare the best run per stock within it. An impossible correlation
    leaves ``matrix`` unset and explains why in ``correlation_note``.
    """
    try:
        best = list(harness.select_best_per_group(records, "stock", "mae").values())
    except AuditError as exc:
        LOG.warning("no divergence analysis: %s", exc)
        best = []
    divergences = harness.find_divergences(best, divergence_threshold)
    per_arch = harness.best_per_stock_by_architecture(records, "mae")
    best_by_arch = tuple((arch, tuple(group.values())) for arch, group in per_arch.items())
    divergences_by_arch = tuple(
        (arch, tuple(harness.find_divergences(group, divergence_threshold))) for arch, group in best_by_arch
    )
    matrix = None
    note = ""
    try:
        matrix = harness.correlate_metrics_with_direction(harness.pool_records(records, pooling))
    except AuditError as exc:
        note = f"{exc.tag}: {exc}"
        LOG.warning("correlation unavailable: %s", exc)
    return ReportInputs(
        tuple(records), tuple(divergences), matrix, pooling, factors, note, best_by_arch, divergences_by_arch
    )


def _real(value: float) -> str:
    return format(value, ".17g")


def _short(value: float) -> str:
    return format(value, ".4f")


def _metric_cells(report: Optional[MetricReport]) -> List[str]:
    if report is None:
        return ["", "", "", ""]
    return [_real(report.mae), _real(report.mse), _real(report.rmse), _real(report.r_squared)]


def write_results_csv(records: Iterable[RunRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(RESULTS_COLUMNS)
    for r in records:
        a = r.assignment
        writer.writerow(
            [r.symbol, r.architecture.value, a.plan_row, a.window_length, a.hop, a.hidden_nodes, a.epochs,
             a.activation.value, r.seed]
            + _metric_cells(r.metrics)
            + [_real(r.control.percent), r.control.direction.value, r.status]
        )


def _parse_results_row(row: Dict[str, str]) -> RunRecord:
    assignment = FactorAssignment(
        window_length=int(row["L"]),
        hop=int(row["H"]),
        hidden_nodes=int(row["N"]),
        epochs=int(row["E"]),
        activation=ActivationKind.parse(row["F"]),
        plan_row=int(row["plan_row"]),
    )
    report = None
    if row["status"] == harness.STATUS_OK:
        report = MetricReport(
            mae=float(row["mae"]), mse=float(row["mse"]), rmse=float(row["rmse"]),
            r_squared=float(row["r2"]), sample_count=0,
        )
    pct = float(row["control_return_pct"])
    control = ReturnSummary(None, None, pct / 100.0, Direction(row["direction"]))
    return RunRecord(
        symbol=row["symbol"],
        architecture=Architecture.parse(row["architecture"]),
        assignment=assignment,
        metrics=report,
        control=control,
        seed=int(row["seed"]),
        status=row["status"],
    )


def read_results_csv(stream: TextIO) -> List[RunRecord]:
    """Parse a Results CSV. Rebuilt metric reports carry sample_count 0.

    Raises:
        MalformedRow: wrong header or an unparsable row; names the line.
    """
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or tuple(reader.fieldnames) != RESULTS_COLUMNS:
        raise MalformedRow(1, f"results header must be {','.join(RESULTS_COLUMNS)}")
    records = []
    for row in reader:
        try:
            records.append(_parse_results_row(row))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRow(reader.line_num, str(exc))
    records.sort(key=RunRecord.sort_key)
    return records


def _runs_rows(records: Sequence[RunRecord]) -> List[List[str]]:
    rows = []
    for r in records:
        rows.append(
            [r.symbol, r.architecture.value, str(r.assignment.plan_row)]
            + _metric_cells(r.metrics)
            + [_real(r.control.percent), r.control.direction.value, str(r.control.direction.sign), r.status]
        )
    return rows


def _divergence_rows(cases: Sequence[DivergenceCase]) -> List[List[str]]:
    rows = []
    for case in cases:
        row = [case.state, str(case.direction_conflict).lower(), _real(case.metric_gap)]
        for r in (case.record_a, case.record_b):
            row += [r.symbol, r.architecture.value, str(r.assignment.plan_row), _real(r.metrics.mae),
                    _real(r.control.percent), r.control.direction.value]
        rows.append(row)
    return rows


def _best_by_architecture_rows(inputs: ReportInputs) -> List[List[str]]:
    rows = []
    for arch, group in inputs.best_by_architecture:
        for r in group:
            rows.append([arch.value, r.symbol, str(r.assignment.plan_row)] + _metric_cells(r.metrics)
                        + [_real(r.control.percent), r.control.direction.value])
    return rows


def _architecture_divergence_rows(inputs: ReportInputs) -> List[List[str]]:
    rows = []
    for arch, cases in inputs.divergences_by_architecture:
        rows.extend([arch.value] + row for row in _divergence_rows(cases))
    return rows


def _comparison_rows(records: Sequence[RunRecord]) -> List[List[str]]:
    rows = []
    for entry in harness.model_comparison(records):
        r = entry.record
        rows.append([entry.symbol, entry.architecture.value, str(r.assignment.plan_row)]
                    + _metric_cells(r.metrics) + ["*" if entry.best_for_symbol else ""])
    return rows


def _range_rows(records: Sequence[RunRecord], factors: FactorTable) -> List[List[str]]:
    rows = []
    for (symbol, arch), analysis in harness.range_analysis_by_group(records, factors).items():
        recommended = analysis.recommended.values()
        for index, factor in enumerate(analysis.factors):
            best_value = recommended[index]
            if isinstance(best_value, ActivationKind):
                best_value = best_value.value
            rows.append([symbol, arch.value, factor.factor]
                        + [_real(m) for m in factor.level_means]
                        + [_real(factor.range), str(factor.best_level + 1), str(best_value)])
    return rows


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _correlation_csv(matrix: Optional[CorrelationMatrix]) -> str:
    labels = harness.CORRELATION_LABELS
    if matrix is None:
        return _csv_text(("",) + labels, [])
    rows = [[label] + [_real(v) for v in matrix.cells[i]] for i, label in enumerate(labels)]
    return _csv_text(("",) + labels, rows)


def _band_lines(inputs: ReportInputs) -> List[str]:
    matrix = inputs.matrix
    if matrix is None:
        return [f"correlation unavailable: {inputs.correlation_note}"]
    lines = [f"n = {matrix.n} ({inputs.pooling})"]
    labels = matrix.labels
    for i, first in enumerate(labels):
        for second in labels[i + 1:]:
            line = f"{first} ~ {second}: {_short(matrix.rho(first, second))} {matrix.interpretation(first, second)}"
            reference = harness.REFERENCE_SRD_CORRELATIONS.get(first) if second == "SRD" else None
            if reference is not None:
                line += f" (reference {_short(reference)})"
            lines.append(line)
    return lines


def _conflicts(cases: Iterable[DivergenceCase]) -> int:
    return sum(1 for c in cases if c.small_gap_conflict)


def _summary_lines(inputs: ReportInputs) -> List[str]:
    lines = [
        f"runs: {len(inputs.records)}",
        f"failed runs: {inputs.failed}",
        f"pooling: {inputs.pooling}",
        f"correlated records: {inputs.matrix.n if inputs.matrix is not None else 0}",
        f"divergence cases: {len(inputs.divergences)}",
        f"conflicting small-gap pairs: {_conflicts(inputs.divergences)}",
    ]
    lines += [f"conflicting small-gap pairs ({arch.value}): {_conflicts(cases)}"
              for arch, cases in inputs.divergences_by_architecture]
    lines.append(f"seed derivation: {harness.SEED_DERIVATION}")
    return lines


def _markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def _markdown(inputs: ReportInputs) -> str:
    out = ["# Forecast direction audit", ""]
    out += [f"- {line}" for line in _summary_lines(inputs)]
    sections = (
        ("Runs", RUNS_COLUMNS, _runs_rows(inputs.records)),
        ("Divergences", DIVERGENCE_COLUMNS, _divergence_rows(inputs.divergences)),
        ("Best run per stock by architecture", BEST_BY_ARCHITECTURE_COLUMNS, _best_by_architecture_rows(inputs)),
        ("Divergences by architecture", ARCHITECTURE_DIVERGENCE_COLUMNS, _architecture_divergence_rows(inputs)),
        ("Model comparison", COMPARISON_COLUMNS, _comparison_rows(inputs.records)),
        ("Range analysis", RANGE_COLUMNS, _range_rows(inputs.records, inputs.factors)),
    )
    for title, header, rows in sections:
        out += ["", f"## {title}", ""] + _markdown_table(header, rows)
    out += ["", "## Correlation", ""]
    if inputs.matrix is not None:
        labels = inputs.matrix.labels
        rows = [[label] + [_short(v) for v in inputs.matrix.cells[i]] for i, label in enumerate(labels)]
        out += _markdown_table(("",) + labels, rows) + [""]
    out += [f"- {line}" for line in _band_lines(inputs)]
    return "\n".join(out) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        raise IoFailure(f"could not write {path}: {exc}")
    LOG.debug("wrote %s", path)
    return path


def _ensure_dir(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"could not create {out_dir}: {exc}")


def emit_correlation(matrix: CorrelationMatrix, pooling: str, out_dir: Path) -> List[Path]:
    """Only ``correlation.csv`` and ``correlation_bands.txt``."""
    _ensure_dir(out_dir)
    inputs = ReportInputs((), (), matrix, pooling)
    return [
        _write(out_dir / "correlation.csv", _correlation_csv(matrix)),
        _write(out_dir / "correlation_bands.txt", "\n".join(_band_lines(inputs)) + "\n"),
    ]


def emit_report(inputs: ReportInputs, out_dir: Path, fmt: str = "csv") -> List[Path]:
    """Write the report files for ``inputs`` into ``out_dir``.

    ``csv`` writes one file per table (see ``CSV_FILES``); ``md`` writes a
    single ``report.md``.

    Raises:
        IoFailure: the directory cannot be created or a file cannot be written.
    """
    _ensure_dir(out_dir)
    if fmt == "md":
        return [_write(out_dir / MARKDOWN_FILE, _markdown(inputs))]
    if fmt != "csv":
        raise ValueError(f"report format must be 'csv' or 'md', got '{fmt}'")
    texts = {
        "runs.csv": _csv_text(RUNS_COLUMNS, _runs_rows(inputs.records)),
        "divergences.csv": _csv_text(DIVERGENCE_COLUMNS, _divergence_rows(inputs.divergences)),
        "correlation.csv": _correlation_csv(inputs.matrix),
        "correlation_bands.txt": "\n".join(_band_lines(inputs)) + "\n",
        "summary.txt": "\n".join(_summary_lines(inputs)) + "\n",
        "model_comparison.csv": _csv_text(COMPARISON_COLUMNS, _comparison_rows(inputs.records)),
        "range_analysis.csv": _csv_text(RANGE_COLUMNS, _range_rows(inputs.records, inputs.factors)),
        "best_by_architecture.csv": _csv_text(BEST_BY_ARCHITECTURE_COLUMNS, _best_by_architecture_rows(inputs)),
        "divergences_by_architecture.csv": _csv_text(
            ARCHITECTURE_DIVERGENCE_COLUMNS, _architecture_divergence_rows(inputs)
        ),
    }
    return [_write(out_dir / name, texts[name]) for name in CSV_FILES]
