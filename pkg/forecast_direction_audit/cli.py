#!/usr/bin/env python3
"""Command-line interface for forecast-direction-audit using Click."""

import csv
from importlib import metadata
import io
import logging
from pathlib import Path
import sys
from typing import List
from typing import Optional
from typing import Tuple

import click
from forecast_direction_audit import config
from forecast_direction_audit import harness
from forecast_direction_audit import ingest
from forecast_direction_audit import oed
from forecast_direction_audit import report
from forecast_direction_audit import synth
from forecast_direction_audit.errors import AuditError
from forecast_direction_audit.errors import ConfigError
from forecast_direction_audit.ingest import PriceSeries


try:
    VERSION = f"forecast-direction-audit {metadata.version('forecast_direction_audit')}"
except Exception:
    VERSION = "forecast-direction-audit"

EXIT_OK = 0
EXIT_RUN_FAILURES = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

RESULTS_FILE = "results.csv"
SCREENING_COLUMNS = ("symbol", "rows", "status", "hurst", "r_squared", "label", "accepted")


def _exit_code(exc: AuditError) -> int:
    return EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_DATA


def _csv_files(path: Path) -> List[Path]:
    if path.is_file():
        return [path]
    return sorted(p for p in path.iterdir() if p.suffix.lower() == ".csv" and p.is_file())


def _load(path: Path) -> PriceSeries:
    with path.open("rb") as handle:
        return ingest.load_price_csv(handle, path.stem, provenance=str(path))


def _load_all(path: Path) -> Tuple[List[PriceSeries], int]:
    """Load every CSV file under ``path``; returns the series and an exit code."""
    stocks = []
    exit_code = EXIT_OK
    for file_path in _csv_files(path):
        try:
            stocks.append(_load(file_path))
        except AuditError as exc:
            logging.error("[%s] ERROR: %s", file_path, exc)
            exit_code = max(exit_code, EXIT_DATA)
    return stocks, exit_code


def _screening_row(file_path: Path, min_r2: float, corrected: bool = False) -> Tuple[List[str], int]:
    """Load and screen one file. Returns a CSV row and the file's exit code."""
    try:
        series = _load(file_path)
    except AuditError as exc:
        logging.error("[%s] ERROR: %s", file_path, exc)
        return [file_path.stem, "", f"failed:{exc.tag}", "", "", "", ""], EXIT_DATA

    integrity = ingest.verify_integrity(series)
    if not integrity.ok:
        logging.warning("[%s] integrity: %s", file_path, integrity)
    try:
        screening = ingest.screen_series(series, min_r2, corrected)
    except AuditError as exc:
        logging.error("[%s] %d rows, no Hurst estimate: %s", file_path, len(series), exc)
        return [series.symbol, str(len(series)), f"failed:{exc.tag}", "", "", "", ""], EXIT_DATA

    logging.info(
        "[%s] %d rows, H=%.4f (fit R2 %.4f, %s)%s",
        file_path, len(series), screening.hurst, screening.r_squared, screening.label,
        "" if screening.accepted else ", poor fit",
    )
    row = [series.symbol, str(len(series)), harness.STATUS_OK, format(screening.hurst, ".17g"),
           format(screening.r_squared, ".17g"), screening.label, str(screening.accepted).lower()]
    return row, EXIT_OK


def _write_csv_file(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_series(series: PriceSeries, out: Path) -> Path:
    path = out / f"{series.symbol}.csv"
    with path.open("w", encoding="utf-8", newline="") as handle:
        ingest.write_price_csv(series, handle)
    return path


def _read_results(path: Path):
    with path.open("r", encoding="utf-8", newline="") as handle:
        return report.read_results_csv(handle)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Increase verbosity.")
@click.option("-q", "--quiet", is_flag=True, help="Suppress non-error output.")
@click.version_option(version=VERSION, prog_name="forecast-direction-audit CLI")
def cli(verbose: bool, quiet: bool) -> None:
    """Audit whether forecast-error metrics say anything about return direction."""
    if not logging.getLogger().handlers:
        if quiet:
            logging.basicConfig(level=logging.ERROR, format="%(message)s")
        else:
            logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="%(message)s")


@cli.command(name="ingest", help="Load price files, check integrity and estimate the Hurst exponent.")
@click.argument("path", type=click.Path(exists=True, file_okay=True, dir_okay=True, path_type=Path))
@click.option("--csv", "csv_out", type=click.Path(dir_okay=False, path_type=Path), help="Also write the screening table.")
@click.option("--min-r2", default=0.9, show_default=True, help="Fit quality needed to accept a Hurst estimate.")
@click.option("--hurst-corrected", is_flag=True, help="Use the Anis-Lloyd adjusted R/S estimator.")
def ingest_cmd(path: Path, csv_out: Optional[Path], min_r2: float, hurst_corrected: bool) -> None:
    files = _csv_files(path)
    if not files:
        logging.error("[%s] ERROR: no CSV files found", path)
        sys.exit(EXIT_DATA)
    exit_code = EXIT_OK
    rows = []
    for file_path in files:
        row, code = _screening_row(file_path, min_r2, hurst_corrected)
        rows.append(row)
        exit_code = max(exit_code, code)
    if csv_out is not None:
        _write_csv_file(csv_out, SCREENING_COLUMNS, rows)
    sys.exit(exit_code)


@cli.command(name="synth", help="Generate seeded synthetic price series as input CSV files.")
@click.option("--kind", type=click.Choice([k.value for k in synth.SynthKind]), default="random_walk", show_default=True)
@click.option("--length", default=synth.BATTERY_LENGTH, show_default=True)
@click.option("--drift", default=0.0, show_default=True)
@click.option("--noise", default=1.0, show_default=True, help="Standard deviation of the shocks.")
@click.option("--start", default=100.0, show_default=True, help="First price level.")
@click.option("--seed", default=0, show_default=True)
@click.option("--symbol", default=None, help="Series name (defaults to '<kind>-<seed>').")
@click.option("--battery", is_flag=True, help="Write the 24-series battery instead of one series.")
@click.option("--mirrored", is_flag=True, help="Append two mirrored pairs to the battery.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory (stdout if omitted).")
def synth_cmd(kind, length, drift, noise, start, seed, symbol, battery, mirrored, out: Optional[Path]) -> None:
    try:
        if battery:
            series = synth.synthetic_battery(length, include_mirrored=mirrored, noise_scale=noise)
        else:
            generated = synth.generate(synth.SynthSpec(synth.SynthKind(kind), length, drift, noise, seed,
                                                       start=start, symbol=symbol))
            series = list(generated) if isinstance(generated, tuple) else [generated]
    except AuditError as exc:
        logging.error("ERROR: %s", exc)
        sys.exit(EXIT_CONFIG)

    if out is None:
        if len(series) > 1:
            logging.error("ERROR: %d series need --out DIRECTORY", len(series))
            sys.exit(EXIT_CONFIG)
        buffer = io.StringIO()
        ingest.write_price_csv(series[0], buffer)
        click.echo(buffer.getvalue(), nl=False)
        sys.exit(EXIT_OK)

    out.mkdir(parents=True, exist_ok=True)
    for s in series:
        logging.info("[%s] %d prices", _write_series(s, out), len(s))
    if battery:
        logging.info("split for this battery: %s", synth.battery_split(series[0]))
    sys.exit(EXIT_OK)


@cli.command(help="Write the 16-run orthogonal plan for a factor table.")
@click.option("--factors", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="TOML factor table.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Plan CSV (stdout if omitted).")
def plan(factors: Optional[Path], out: Optional[Path]) -> None:
    try:
        table = oed.DEFAULT_FACTORS if factors is None else config.load_factor_table(factors)
    except AuditError as exc:
        logging.error("[%s] ERROR: %s", factors, exc)
        sys.exit(_exit_code(exc))
    check = oed.verify_orthogonality(oed.l16_4_5())
    if not check.passed:
        logging.error("ERROR: design array is not orthogonal: %s", check.violation)
        sys.exit(EXIT_DATA)

    rows = oed.generate_plan(table)
    if out is None:
        buffer = io.StringIO()
        oed.write_plan_csv(rows, buffer)
        click.echo(buffer.getvalue(), nl=False)
    else:
        with out.open("w", encoding="utf-8", newline="") as handle:
            oed.write_plan_csv(rows, handle)
        logging.info("[%s] %d runs instead of %d", out, len(rows), oed.full_factorial_size(table))
    sys.exit(EXIT_OK)


@cli.command(help="Run the full pipeline: train, score, compare, correlate, report.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="TOML file with an [experiment] table; flags override it.")
@click.option("--data", type=click.Path(path_type=Path), help="Directory of price CSV files.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")
@click.option("--factors", type=click.Path(path_type=Path), help="TOML factor table.")
@click.option("--split", help="train_end,test_start,test_end as ISO dates.")
@click.option("--arch", help="Comma-separated architectures (mlp,rnn,lstm,gru,birnn,bilstm).")
@click.option("--seed", type=int, help="Base seed; required.")
@click.option("--jobs", type=int, help="Worker processes.")
@click.option("--pooling", type=click.Choice(harness.POOLING_MODES), help="Records entering the correlation.")
@click.option("--format", "fmt", type=click.Choice(config.REPORT_FORMATS), help="Report format.")
@click.option("--learning-rate", type=float, help="Override the per-activation learning rates.")
@click.option("--save-models", type=click.Path(file_okay=False, path_type=Path), help="Directory for trained models.")
def experiment(config_path, data, out, factors, split, arch, seed, jobs, pooling, fmt, learning_rate, save_models) -> None:
    overrides = {
        "data": data, "out": out, "factors": factors, "split": split, "arch": arch, "seed": seed,
        "jobs": jobs, "pooling": pooling, "format": fmt, "learning_rate": learning_rate,
        "save_models": save_models,
    }
    try:
        file_values = config.read_experiment_config(config_path) if config_path else {}
        run = config.resolve_run_config(file_values, overrides)
    except AuditError as exc:
        logging.error("ERROR: %s", exc)
        sys.exit(_exit_code(exc))

    stocks, exit_code = _load_all(run.data)
    if exit_code != EXIT_OK or not stocks:
        logging.error("ERROR: no experiment without clean input data in %s", run.data)
        sys.exit(EXIT_DATA)
    for series in stocks:
        try:
            screening = ingest.screen_series(series, run.hurst_min_r2, run.hurst_corrected)
            logging.debug("[%s] H=%.4f %s", series.symbol, screening.hurst, screening.label)
        except AuditError as exc:
            logging.debug("[%s] not screened: %s", series.symbol, exc)

    try:
        run.out.mkdir(parents=True, exist_ok=True)
        if run.save_models is not None:
            run.save_models.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        logging.error("ERROR: %s", exc)
        sys.exit(EXIT_CONFIG)

    try:
        records = harness.run_experiment(
            stocks, run.split, run.architectures, oed.generate_plan(run.factors), run.seed,
            jobs=run.jobs, learning_rate=run.learning_rate, model_dir=run.save_models,
        )
        with (run.out / RESULTS_FILE).open("w", encoding="utf-8", newline="") as handle:
            report.write_results_csv(records, handle)
        inputs = report.assemble(records, run.pooling, run.divergence_threshold, run.factors)
        report.emit_report(inputs, run.out, run.fmt)
    except AuditError as exc:
        logging.error("ERROR: %s", exc)
        sys.exit(_exit_code(exc))

    if inputs.matrix is None:
        exit_code = EXIT_DATA
    elif inputs.failed:
        logging.warning("%d of %d runs failed", inputs.failed, len(records))
        exit_code = EXIT_RUN_FAILURES
    logging.info("[%s] results and report written", run.out)
    sys.exit(exit_code)


@cli.command(help="Correlate error metrics with return direction from a results CSV.")
@click.argument("results", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--pooling", type=click.Choice(harness.POOLING_MODES), default="best-per-stock", show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Write correlation.csv and bands here.")
def correlate(results: Path, pooling: str, out: Optional[Path]) -> None:
    try:
        records = _read_results(results)
        matrix = harness.correlate_metrics_with_direction(harness.pool_records(records, pooling))
    except AuditError as exc:
        logging.error("[%s] ERROR: %s", results, exc)
        sys.exit(_exit_code(exc))

    labels = matrix.labels
    click.echo(",".join(("",) + labels))
    for i, label in enumerate(labels):
        click.echo(",".join([label] + [format(v, ".4f") for v in matrix.cells[i]]))
    for metric in labels[:-1]:
        click.echo(f"{metric} ~ SRD: {matrix.rho(metric, 'SRD'):.4f} {matrix.interpretation(metric, 'SRD')}")
    if out is not None:
        try:
            report.emit_correlation(matrix, pooling, out)
        except AuditError as exc:
            logging.error("[%s] ERROR: %s", out, exc)
            sys.exit(_exit_code(exc))
    sys.exit(EXIT_OK)


@cli.command(name="report", help="Rebuild every report file from a results CSV.")
@click.argument("results", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True, help="Output directory.")
@click.option("--pooling", type=click.Choice(harness.POOLING_MODES), default="best-per-stock", show_default=True)
@click.option("--format", "fmt", type=click.Choice(config.REPORT_FORMATS), default="csv", show_default=True)
@click.option("--factors", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="TOML factor table.")
@click.option("--divergence-threshold", default=harness.DEFAULT_DIVERGENCE_THRESHOLD, show_default=True)
def report_cmd(results: Path, out: Path, pooling: str, fmt: str, factors: Optional[Path], divergence_threshold: float) -> None:
    try:
        table = oed.DEFAULT_FACTORS if factors is None else config.load_factor_table(factors)
        records = _read_results(results)
        inputs = report.assemble(records, pooling, divergence_threshold, table)
        report.emit_report(inputs, out, fmt)
    except AuditError as exc:
        logging.error("[%s] ERROR: %s", results, exc)
        sys.exit(_exit_code(exc))
    sys.exit(EXIT_DATA if inputs.matrix is None else EXIT_OK)


def main():
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    cli()
