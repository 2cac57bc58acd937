"""TOML configuration: factor tables and experiment settings.

Values given on the command line override values from the file. Relative
paths in a file resolve against the directory holding that file.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import Any
from typing import Dict
from typing import Mapping
from typing import Optional
from typing import Tuple

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:
    import tomli as tomllib  # Backport for Python <3.11

from forecast_direction_audit import harness
from forecast_direction_audit import oed
from forecast_direction_audit.errors import ConfigError
from forecast_direction_audit.errors import InvalidFactorTable
from forecast_direction_audit.ingest import SplitSpec
from forecast_direction_audit.models import Architecture
from forecast_direction_audit.oed import FactorTable

LOG = logging.getLogger(__name__)

EXPERIMENT_KEYS = frozenset({
    "data", "out", "factors", "split", "arch", "seed", "jobs", "pooling", "format",
    "learning_rate", "divergence_threshold", "hurst_min_r2", "hurst_corrected", "save_models",
})
_PATH_KEYS = ("data", "out", "factors", "save_models")
REPORT_FORMATS = ("csv", "md")


@dataclass(frozen=True)
class RunConfig:
    data: Path
    out: Path
    split: SplitSpec
    architectures: Tuple[Architecture, ...]
    seed: int
    factors: FactorTable = oed.DEFAULT_FACTORS
    jobs: int = 1
    pooling: str = "best-per-stock"
    fmt: str = "csv"
    learning_rate: Optional[float] = None
    divergence_threshold: float = harness.DEFAULT_DIVERGENCE_THRESHOLD
    hurst_min_r2: float = 0.9
    hurst_corrected: bool = False
    save_models: Optional[Path] = None


def read_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")


def load_factor_table(path: Path) -> FactorTable:
    """Read a ``[factors]`` table.

    Raises:
        InvalidFactorTable: the table is missing or violates the level rules.
    """
    data = read_toml(Path(path))
    factors = data.get("factors")
    if not isinstance(factors, dict):
        raise InvalidFactorTable(f"{path}: no [factors] table")
    for name, levels in factors.items():
        if not isinstance(levels, list):
            raise InvalidFactorTable(f"{path}: factor {name} must be a list of levels")
    table = FactorTable.from_mapping(factors)
    LOG.debug("factor table loaded from %s", path)
    return table


def read_experiment_config(path: Path) -> Dict[str, Any]:
    """Read the ``[experiment]`` table with its paths made absolute."""
    path = Path(path)
    section = read_toml(path).get("experiment")
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: no [experiment] table")
    unknown = sorted(set(section) - EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    values = dict(section)
    for key in _PATH_KEYS:
        if key in values:
            values[key] = (path.parent / str(values[key])).resolve()
    return values


def parse_architectures(value) -> Tuple[Architecture, ...]:
    names = value.split(",") if isinstance(value, str) else list(value)
    try:
        archs = tuple(Architecture.parse(str(name)) for name in names if str(name).strip())
    except ValueError as exc:
        raise ConfigError(str(exc))
    if not archs:
        raise ConfigError("at least one architecture is required")
    return tuple(sorted(set(archs), key=lambda a: a.order))


def _number(values: Mapping[str, Any], key: str, kind, default):
    value = values.get(key)
    if value is None:
        return default
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be {kind.__name__}, got {value!r}")


def resolve_run_config(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> RunConfig:
    """Merge file values with flag overrides (``None`` means not given) and validate.

    Raises:
        ConfigError: a required value is missing or a value is invalid.
    """
    values = dict(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})

    for key in ("data", "out", "split", "seed"):
        if values.get(key) is None:
            raise ConfigError(f"--{key} is required")
    data = Path(values["data"]).resolve()
    if not data.is_dir():
        raise ConfigError(f"data directory {data} does not exist")

    split = values["split"]
    if not isinstance(split, SplitSpec):
        split = SplitSpec.parse(str(split))

    factors = oed.DEFAULT_FACTORS
    if values.get("factors") is not None:
        factors = load_factor_table(Path(values["factors"]).resolve())

    pooling = values.get("pooling", "best-per-stock")
    if pooling not in harness.POOLING_MODES:
        raise ConfigError(f"pooling must be one of {', '.join(harness.POOLING_MODES)}, got '{pooling}'")
    fmt = values.get("format", "csv")
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"format must be one of {', '.join(REPORT_FORMATS)}, got '{fmt}'")

    jobs = _number(values, "jobs", int, 1)
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    learning_rate = _number(values, "learning_rate", float, None)
    if learning_rate is not None and not learning_rate > 0:
        raise ConfigError(f"learning_rate must be positive, got {learning_rate}")

    hurst_corrected = values.get("hurst_corrected", False)
    if not isinstance(hurst_corrected, bool):
        raise ConfigError(f"hurst_corrected must be true or false, got {hurst_corrected!r}")

    save_models = values.get("save_models")
    return RunConfig(
        data=data,
        out=Path(values["out"]).resolve(),
        split=split,
        architectures=parse_architectures(values.get("arch", "mlp,rnn,lstm,gru,birnn,bilstm")),
        seed=_number(values, "seed", int, None),
        factors=factors,
        jobs=jobs,
        pooling=pooling,
        fmt=fmt,
        learning_rate=learning_rate,
        divergence_threshold=_number(values, "divergence_threshold", float, harness.DEFAULT_DIVERGENCE_THRESHOLD),
        hurst_min_r2=_number(values, "hurst_min_r2", float, 0.9),
        hurst_corrected=hurst_corrected,
        save_models=None if save_models is None else Path(save_models).resolve(),
    )
