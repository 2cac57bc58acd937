"""Top-level package for forecast-direction-audit.

This package exposes the API for training forecasters under an orthogonal
design and testing whether their error metrics track return direction.
"""

from forecast_direction_audit.harness import correlate_metrics_with_direction
from forecast_direction_audit.harness import derive_seed
from forecast_direction_audit.harness import find_divergences
from forecast_direction_audit.harness import mirror_test
from forecast_direction_audit.harness import no_treatment_control
from forecast_direction_audit.harness import run_experiment
from forecast_direction_audit.harness import select_best_per_group
from forecast_direction_audit.hurst import hurst_exponent
from forecast_direction_audit.ingest import load_price_csv
from forecast_direction_audit.ingest import make_windows
from forecast_direction_audit.ingest import normalize_minmax
from forecast_direction_audit.ingest import split_by_date
from forecast_direction_audit.ingest import verify_integrity
from forecast_direction_audit.metrics import evaluate
from forecast_direction_audit.metrics import pearson
from forecast_direction_audit.metrics import range_return
from forecast_direction_audit.oed import generate_plan
from forecast_direction_audit.oed import l16_4_5
from forecast_direction_audit.oed import range_analysis
from forecast_direction_audit.report import emit_report
from forecast_direction_audit.synth import generate
from forecast_direction_audit.training import predict
from forecast_direction_audit.training import train


__all__ = [
    "load_price_csv",
    "verify_integrity",
    "normalize_minmax",
    "make_windows",
    "split_by_date",
    "hurst_exponent",
    "train",
    "predict",
    "evaluate",
    "range_return",
    "pearson",
    "l16_4_5",
    "generate_plan",
    "range_analysis",
    "run_experiment",
    "no_treatment_control",
    "select_best_per_group",
    "find_divergences",
    "correlate_metrics_with_direction",
    "mirror_test",
    "derive_seed",
    "emit_report",
    "generate",
]
