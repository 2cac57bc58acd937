import logging
from pathlib import Path

from click.testing import CliRunner
import pytest

from conftest import write_price_file
from forecast_direction_audit import cli as cli_module
from forecast_direction_audit import oed
from forecast_direction_audit import synth
from forecast_direction_audit.cli import cli

TINY_FACTORS = """\
[factors]
L = [2, 3, 4, {longest}]
H = [0, 1, 2, 3]
N = [2, 3, 4, 5]
E = [1, 2, 3, 4]
F = ["linear", "sigmoid", "tanh", "relu"]
"""
LENGTH = 60
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def factors_file(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_FACTORS.format(longest=5))
    return path


@pytest.fixture
def split_text():
    return str(synth.battery_split(synth.generate(synth.SynthSpec(synth.SynthKind.RANDOM_WALK, LENGTH))))


@pytest.fixture
def data_dir(tmp_path, runner):
    directory = tmp_path / "data"
    for seed in (1, 2, 3):
        result = runner.invoke(cli, ["synth", "--length", str(LENGTH), "--seed", str(seed),
                                     "--symbol", f"w{seed}", "--out", str(directory)])
        assert result.exit_code == 0
    return directory


def _experiment(runner, data_dir, out, factors_file, split_text, *extra):
    return runner.invoke(cli, ["experiment", "--data", str(data_dir), "--out", str(out),
                               "--factors", str(factors_file), "--split", split_text,
                               "--arch", "mlp", "--seed", "7", *extra])


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "forecast-direction-audit" in result.output


def test_ingest_directory(tmp_path, runner, caplog):
    closes = [100.0 + ((i * 37) % 11) - 0.05 * i for i in range(200)]
    write_price_file(tmp_path, "GOOD", closes)
    out = tmp_path / "screening.csv"
    with caplog.at_level(logging.INFO):
        result = runner.invoke(cli, ["ingest", str(tmp_path), "--csv", str(out)])
    assert result.exit_code == 0
    assert "200 rows" in caplog.text
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(cli_module.SCREENING_COLUMNS)
    assert lines[1].startswith("GOOD,200,ok,")


def test_ingest_reports_bad_file(tmp_path, runner, caplog):
    write_price_file(tmp_path, "GOOD", [100.0 + i % 7 for i in range(100)])
    (tmp_path / "BAD.csv").write_text("Date,Close\n2017-01-02,abc\n2017-01-03,5\n")
    out = tmp_path / "out" / "screening.csv"
    result = runner.invoke(cli, ["ingest", str(tmp_path), "--csv", str(out)])
    assert result.exit_code == cli_module.EXIT_DATA
    assert "BAD.csv" in caplog.text
    rows = out.read_text().splitlines()
    assert rows[1].startswith("BAD,,failed:malformed_row")
    assert rows[2].startswith("GOOD,100,ok,")


def test_ingest_empty_directory(tmp_path, runner):
    assert runner.invoke(cli, ["ingest", str(tmp_path)]).exit_code == cli_module.EXIT_DATA


def test_synth_to_stdout(runner):
    result = runner.invoke(cli, ["synth", "--kind", "random_walk", "--length", "30", "--drift", "0.5", "--seed", "4"])
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert lines[0] == "Date,Close"
    assert len(lines) == 31
    assert lines[1] == f"{synth.FIRST_DATE.isoformat()},100"
    again = runner.invoke(cli, ["synth", "--kind", "random_walk", "--length", "30", "--drift", "0.5", "--seed", "4"])
    assert again.output == result.output


def test_synth_battery(tmp_path, runner):
    assert runner.invoke(cli, ["synth", "--battery"]).exit_code == cli_module.EXIT_CONFIG
    result = runner.invoke(cli, ["synth", "--battery", "--mirrored", "--length", "40", "--out", str(tmp_path)])
    assert result.exit_code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert len(names) == 28
    assert "mp25-mirror.csv" in names


def test_synth_bad_length(runner):
    assert runner.invoke(cli, ["synth", "--length", "1"]).exit_code == cli_module.EXIT_CONFIG


def test_plan_stdout(runner, factors_file):
    result = runner.invoke(cli, ["plan"])
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert len(lines) == 1 + oed.RUNS
    tiny = runner.invoke(cli, ["plan", "--factors", str(factors_file)])
    assert tiny.exit_code == 0
    assert tiny.output != result.output


def test_plan_bad_factors(tmp_path, runner):
    path = tmp_path / "bad.toml"
    path.write_text("[factors]\nL = [1, 2]\n")
    assert runner.invoke(cli, ["plan", "--factors", str(path)]).exit_code == cli_module.EXIT_CONFIG


def test_experiment_pipeline(tmp_path, runner, data_dir, factors_file, split_text):
    out = tmp_path / "out"
    result = _experiment(runner, data_dir, out, factors_file, split_text)
    assert result.exit_code == 0, result.output
    results = (out / cli_module.RESULTS_FILE).read_text().splitlines()
    assert len(results) == 1 + 3 * oed.RUNS
    for name in ("runs.csv", "divergences.csv", "correlation.csv", "summary.txt", "range_analysis.csv"):
        assert (out / name).exists()

    again = tmp_path / "again"
    assert _experiment(runner, data_dir, again, factors_file, split_text).exit_code == 0
    for name in (cli_module.RESULTS_FILE, "runs.csv", "correlation.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()

    correlated = runner.invoke(cli, ["correlate", str(out / cli_module.RESULTS_FILE), "--out", str(tmp_path / "corr")])
    assert correlated.exit_code == 0
    assert correlated.output.splitlines()[0] == ",MAE,MSE,RMSE,R2,SRD"
    assert "MAE ~ SRD: " in correlated.output
    assert (tmp_path / "corr" / "correlation_bands.txt").exists()

    rebuilt = runner.invoke(cli, ["report", str(out / cli_module.RESULTS_FILE), "--out", str(tmp_path / "md"),
                                  "--format", "md", "--factors", str(factors_file)])
    assert rebuilt.exit_code == 0
    assert (tmp_path / "md" / "report.md").exists()


def test_experiment_from_config_file(tmp_path, runner, data_dir, factors_file, split_text):
    config_path = tmp_path / "experiment.toml"
    config_path.write_text(
        "[experiment]\n"
        'data = "data"\n'
        'out = "from-config"\n'
        f'factors = "{factors_file.name}"\n'
        f'split = "{split_text}"\n'
        'arch = ["mlp"]\n'
        "seed = 3\n"
        'format = "md"\n'
    )
    result = runner.invoke(cli, ["experiment", "--config", str(config_path), "--seed", "4"])
    assert result.exit_code == 0
    assert (tmp_path / "from-config" / "report.md").exists()
    assert (tmp_path / "from-config" / cli_module.RESULTS_FILE).exists()


def test_experiment_records_failed_runs(tmp_path, runner, data_dir, split_text):
    factors = tmp_path / "long.toml"
    factors.write_text(TINY_FACTORS.format(longest=30))
    out = tmp_path / "out"
    result = _experiment(runner, data_dir, out, factors, split_text)
    assert result.exit_code == cli_module.EXIT_RUN_FAILURES
    assert "failed:insufficient_data" in (out / cli_module.RESULTS_FILE).read_text()


def test_experiment_saves_models(tmp_path, runner, data_dir, factors_file, split_text):
    models = tmp_path / "models"
    result = _experiment(runner, data_dir, tmp_path / "out", factors_file, split_text, "--save-models", str(models))
    assert result.exit_code == 0
    assert len(list(models.iterdir())) == 3 * oed.RUNS


def test_experiment_usage_errors(tmp_path, runner, data_dir, factors_file, split_text):
    missing_seed = runner.invoke(cli, ["experiment", "--data", str(data_dir), "--out", str(tmp_path / "o"),
                                       "--split", split_text])
    assert missing_seed.exit_code == cli_module.EXIT_CONFIG
    bad_split = _experiment(runner, data_dir, tmp_path / "o", factors_file, "2011-13-01,2011-08-01,2011-10-07")
    assert bad_split.exit_code == cli_module.EXIT_CONFIG


def test_experiment_bad_data(tmp_path, runner, data_dir, factors_file, split_text):
    (data_dir / "broken.csv").write_text("Date,Open\n2011-01-03,1\n")
    result = _experiment(runner, data_dir, tmp_path / "out", factors_file, split_text)
    assert result.exit_code == cli_module.EXIT_DATA


def test_correlate_too_few_records(tmp_path, runner, data_dir, factors_file, split_text):
    out = tmp_path / "out"
    single = tmp_path / "single"
    single.mkdir()
    (single / "w1.csv").write_bytes((data_dir / "w1.csv").read_bytes())
    result = _experiment(runner, single, out, factors_file, split_text)
    assert result.exit_code == cli_module.EXIT_DATA
    correlated = runner.invoke(cli, ["correlate", str(out / cli_module.RESULTS_FILE)])
    assert correlated.exit_code == cli_module.EXIT_DATA
    # one stock means one control return shared by every run
    all_runs = runner.invoke(cli, ["correlate", str(out / cli_module.RESULTS_FILE), "--pooling", "all-runs"])
    assert all_runs.exit_code == cli_module.EXIT_DATA


def test_ingest_hurst_correction_flag(tmp_path, runner):
    closes = [100.0 + ((i * 37) % 11) - 0.05 * i for i in range(200)]
    write_price_file(tmp_path, "GOOD", closes)
    plain = tmp_path / "plain.csv"
    adjusted = tmp_path / "adjusted.csv"
    assert runner.invoke(cli, ["ingest", str(tmp_path / "GOOD.csv"), "--csv", str(plain)]).exit_code == 0
    result = runner.invoke(cli, ["ingest", str(tmp_path / "GOOD.csv"), "--csv", str(adjusted), "--hurst-corrected"])
    assert result.exit_code == 0
    plain_row = plain.read_text().splitlines()[1].split(",")
    adjusted_row = adjusted.read_text().splitlines()[1].split(",")
    assert plain_row[3] != adjusted_row[3]
    # the fit diagnostic is the plain regression either way
    assert plain_row[4] == adjusted_row[4]


@pytest.mark.slow
def test_shipped_battery_experiment(tmp_path, runner):
    battery = tmp_path / "battery"
    assert runner.invoke(cli, ["synth", "--battery", "--mirrored", "--out", str(battery)]).exit_code == 0
    outputs = []
    for jobs in ("1", "4"):
        out = tmp_path / f"report-{jobs}"
        result = runner.invoke(cli, ["experiment", "--config", str(CONFIGS / "experiment.toml"),
                                     "--data", str(battery), "--out", str(out), "--jobs", jobs])
        assert result.exit_code == 0, result.output
        outputs.append(out)

    serial, parallel = outputs
    names = sorted(p.name for p in serial.iterdir())
    assert names == sorted(p.name for p in parallel.iterdir())
    for name in names:
        assert (serial / name).read_bytes() == (parallel / name).read_bytes(), name

    summary = (serial / "summary.txt").read_text().splitlines()
    assert "failed runs: 0" in summary
    assert "correlated records: 28" in summary
    pooled = next(line for line in summary if line.startswith("conflicting small-gap pairs: "))
    assert int(pooled.rsplit(" ", 1)[1]) >= 1
