"""Exception hierarchy for forecast-direction-audit.

Every error carries a stable snake_case ``tag``. Experiment runs that fail
are recorded with the status ``failed:<tag>``, so tags are part of the
results file format and must not change.
"""


class AuditError(Exception):
    """Root of all domain errors."""

    tag = "error"


class DataError(AuditError):
    """Input data cannot be used as requested."""

    tag = "data_error"


class ModelError(AuditError):
    """A network cannot be evaluated or trained."""

    tag = "model_error"


class DesignError(AuditError):
    """An experiment design is malformed."""

    tag = "design_error"


class ConfigError(AuditError):
    """Invalid configuration file or command-line options."""

    tag = "config_error"


class IoFailure(AuditError):
    """Reading or writing an artifact failed."""

    tag = "io_failure"


# ingest

class MissingColumn(DataError):
    tag = "missing_column"

    def __init__(self, column: str):
        super().__init__(f"CSV header lacks required column '{column}'")
        self.column = column


class MalformedRow(DataError):
    tag = "malformed_row"

    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class EmptySeries(DataError):
    tag = "empty_series"


class InvalidSeries(DataError):
    tag = "invalid_series"


class DegenerateRange(DataError):
    tag = "degenerate_range"


class TooShort(DataError):
    tag = "too_short"


class ZeroVariance(DataError):
    tag = "zero_variance"


class InsufficientData(DataError):
    tag = "insufficient_data"


class EmptyPartition(DataError):
    tag = "empty_partition"


# metrics

class LengthMismatch(DataError):
    tag = "length_mismatch"


class EmptyInput(DataError):
    tag = "empty_input"


class ConstantActual(DataError):
    tag = "constant_actual"


class ConstantInput(DataError):
    tag = "constant_input"


class OutOfRange(DataError):
    tag = "out_of_range"


# harness

class EmptyGroup(DataError):
    tag = "empty_group"


class ConstantColumn(DataError):
    tag = "constant_column"

    def __init__(self, label: str):
        super().__init__(f"column '{label}' is constant; correlation undefined")
        self.label = label


class TooFewRecords(DataError):
    tag = "too_few_records"


class MirrorMismatch(DataError):
    tag = "mirror_mismatch"


# synth

class BadSpec(DataError):
    tag = "bad_spec"


# models

class ShapeMismatch(ModelError):
    tag = "shape_mismatch"


class NonFiniteLoss(ModelError):
    tag = "non_finite_loss"

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


# oed

class MalformedArray(DesignError):
    tag = "malformed_array"


class IncompletePlan(DesignError):
    tag = "incomplete_plan"


class InvalidFactorTable(DesignError, ConfigError):
    tag = "invalid_factor_table"
