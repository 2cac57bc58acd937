import io

import numpy as np
import pytest

from forecast_direction_audit import harness
from forecast_direction_audit import report
from forecast_direction_audit.activations import ActivationKind
from forecast_direction_audit.errors import IoFailure
from forecast_direction_audit.errors import MalformedRow
from forecast_direction_audit.harness import CorrelationMatrix
from forecast_direction_audit.harness import RunRecord
from forecast_direction_audit.metrics import Direction
from forecast_direction_audit.metrics import MetricReport
from forecast_direction_audit.metrics import ReturnSummary
from forecast_direction_audit.models import Architecture
from forecast_direction_audit.oed import FactorAssignment


def _record(symbol, arch, mae, pct, plan_row=0, status=harness.STATUS_OK):
    assignment = FactorAssignment(10, 1, 20, 50, ActivationKind.SIGMOID, plan_row)
    metrics = None
    if status == harness.STATUS_OK:
        metrics = MetricReport(mae, mae * mae * 1.5, mae * 1.2, 0.95 - mae, 40)
    return RunRecord(symbol, arch, assignment, metrics, ReturnSummary.from_return(pct / 100.0), 1234, status)


@pytest.fixture
def records():
    return [
        _record("600171", Architecture.MLP, 0.0228, -34.43),
        _record("600171", Architecture.LSTM, 0.031, -34.43, plan_row=1),
        _record("AAPL", Architecture.MLP, 0.045, 3.5),
        _record("AAPL", Architecture.LSTM, 0.0, 3.5, plan_row=2, status="failed:insufficient_data"),
        _record("MSFT", Architecture.MLP, 0.0174, 14.60),
        _record("MSFT", Architecture.GRU, 0.019, 14.60, plan_row=5),
    ]


def test_results_csv_roundtrip(records):
    buffer = io.StringIO()
    report.write_results_csv(records, buffer)
    text = buffer.getvalue()
    assert text.splitlines()[0] == ",".join(report.RESULTS_COLUMNS)
    assert "failed:insufficient_data" in text
    loaded = report.read_results_csv(io.StringIO(text))
    assert len(loaded) == len(records)
    for original, parsed in zip(sorted(records, key=RunRecord.sort_key), loaded):
        assert parsed.symbol == original.symbol
        assert parsed.architecture is original.architecture
        assert parsed.assignment == original.assignment
        assert parsed.status == original.status
        assert parsed.seed == original.seed
        assert parsed.control.direction is original.control.direction
        assert parsed.control.range_return == pytest.approx(original.control.range_return, rel=1e-12)
        if original.ok:
            assert parsed.metrics.mae == original.metrics.mae
            assert parsed.metrics.r_squared == original.metrics.r_squared
        else:
            assert parsed.metrics is None


def test_results_csv_rejects_bad_input():
    with pytest.raises(MalformedRow):
        report.read_results_csv(io.StringIO("symbol,mae\nA,0.1\n"))
    header = ",".join(report.RESULTS_COLUMNS)
    row = "A,mlp,0,5,0,5,10,tanh,1,x,0.1,0.1,0.9,1.0,up,ok"
    with pytest.raises(MalformedRow) as info:
        report.read_results_csv(io.StringIO(f"{header}\n{row}\n"))
    assert info.value.row == 2


def test_assemble_finds_reference_divergence(records):
    inputs = report.assemble(records, "best-per-stock", 0.01)
    conflicts = [c for c in inputs.divergences if c.small_gap_conflict]
    assert len(conflicts) == 1
    assert {conflicts[0].record_a.symbol, conflicts[0].record_b.symbol} == {"600171", "MSFT"}
    assert inputs.failed == 1
    assert inputs.matrix is not None
    assert inputs.matrix.n == 3


def test_divergences_hold_the_architecture_fixed(records):
    inputs = report.assemble(records, "best-per-stock", 0.01)
    assert [arch for arch, _ in inputs.best_by_architecture] == [Architecture.MLP, Architecture.LSTM, Architecture.GRU]
    best_mlp = dict(inputs.best_by_architecture)[Architecture.MLP]
    assert [r.symbol for r in best_mlp] == ["600171", "AAPL", "MSFT"]
    for arch, cases in inputs.divergences_by_architecture:
        for case in cases:
            assert case.record_a.architecture is arch
            assert case.record_b.architecture is arch
    per_arch = dict(inputs.divergences_by_architecture)
    assert len(per_arch[Architecture.MLP]) == 3
    assert per_arch[Architecture.LSTM] == ()
    conflicts = [c for c in per_arch[Architecture.MLP] if c.small_gap_conflict]
    assert {conflicts[0].record_a.symbol, conflicts[0].record_b.symbol} == {"600171", "MSFT"}


def test_emit_per_architecture_tables(tmp_path, records):
    report.emit_report(report.assemble(records), tmp_path)
    best = (tmp_path / "best_by_architecture.csv").read_text().splitlines()
    assert best[0] == ",".join(report.BEST_BY_ARCHITECTURE_COLUMNS)
    assert [line.split(",")[:2] for line in best[1:]] == [
        ["mlp", "600171"], ["mlp", "AAPL"], ["mlp", "MSFT"], ["lstm", "600171"], ["gru", "MSFT"],
    ]
    divergences = (tmp_path / "divergences_by_architecture.csv").read_text().splitlines()
    assert divergences[0] == ",".join(report.ARCHITECTURE_DIVERGENCE_COLUMNS)
    assert len(divergences) == 1 + 3
    assert all(line.startswith("mlp,") for line in divergences[1:])
    summary = (tmp_path / "summary.txt").read_text().splitlines()
    assert "conflicting small-gap pairs (mlp): 1" in summary
    assert "conflicting small-gap pairs (lstm): 0" in summary


def test_assemble_without_correlation(records):
    inputs = report.assemble(records[:2], "all-runs")
    assert inputs.matrix is None
    assert inputs.correlation_note.startswith("too_few_records")


def test_emit_csv_report(tmp_path, records):
    inputs = report.assemble(records)
    paths = report.emit_report(inputs, tmp_path / "out")
    assert [p.name for p in paths] == list(report.CSV_FILES)
    runs = (tmp_path / "out" / "runs.csv").read_text().splitlines()
    assert runs[0] == ",".join(report.RUNS_COLUMNS)
    assert len(runs) == 1 + len(records)
    assert runs[1].startswith("600171,mlp,0,")
    assert runs[1].endswith(",down,-1,ok")
    summary = (tmp_path / "out" / "summary.txt").read_text()
    assert "failed runs: 1" in summary
    assert "conflicting small-gap pairs: 1" in summary
    comparison = (tmp_path / "out" / "model_comparison.csv").read_text().splitlines()
    assert "MSFT,mlp,0," in comparison[-2]
    assert comparison[-2].endswith(",*")


def test_emit_report_is_byte_deterministic(tmp_path, records):
    first = report.emit_report(report.assemble(records), tmp_path / "a")
    second = report.emit_report(report.assemble(records), tmp_path / "b")
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_empty_divergences_still_written(tmp_path):
    records = [_record("A", Architecture.MLP, 0.01, 2.0), _record("B", Architecture.MLP, 0.015, 5.0)]
    report.emit_report(report.assemble(records), tmp_path)
    assert (tmp_path / "divergences.csv").read_text() == ",".join(report.DIVERGENCE_COLUMNS) + "\n"
    assert "correlation unavailable: too_few_records" in (tmp_path / "correlation_bands.txt").read_text()


def test_emit_markdown_report(tmp_path, records):
    paths = report.emit_report(report.assemble(records), tmp_path, fmt="md")
    assert [p.name for p in paths] == [report.MARKDOWN_FILE]
    text = paths[0].read_text()
    assert text.startswith("# Forecast direction audit\n")
    for title in ("## Runs", "## Divergences", "## Best run per stock by architecture",
                  "## Divergences by architecture", "## Model comparison", "## Range analysis", "## Correlation"):
        assert title in text
    with pytest.raises(ValueError):
        report.emit_report(report.assemble(records), tmp_path, fmt="html")


def test_emit_correlation_bands(tmp_path):
    cells = np.eye(5)
    cells[0, 4] = cells[4, 0] = 0.8753
    cells[1, 4] = cells[4, 1] = -0.2036
    matrix = CorrelationMatrix(harness.CORRELATION_LABELS, cells, 24)
    report.emit_correlation(matrix, "best-per-stock", tmp_path)
    bands = (tmp_path / "correlation_bands.txt").read_text().splitlines()
    assert bands[0] == "n = 24 (best-per-stock)"
    assert "MAE ~ SRD: 0.8753 High positive (reference -0.2775)" in bands
    assert "MSE ~ SRD: -0.2036 Negligible (negative) (reference -0.2036)" in bands
    assert "MAE ~ MSE: 0.0000 Negligible" in bands
    rows = (tmp_path / "correlation.csv").read_text().splitlines()
    assert rows[0] == ",MAE,MSE,RMSE,R2,SRD"
    assert rows[1] == "MAE,1,0,0,0,0.87529999999999997"


def test_emit_report_io_failure(tmp_path, records):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoFailure):
        report.emit_report(report.assemble(records), blocker / "out")


def test_reference_directions(records):
    assert records[0].control.direction is Direction.DOWN
    assert records[4].control.direction is Direction.UP
