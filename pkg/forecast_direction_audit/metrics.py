"""Prediction-error measures, range-span return and Pearson correlation.

Error measures are computed on normalized values. Returns are computed on
raw prices. Variances and covariances use the population (divide-by-N)
convention throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
import enum
import math
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from forecast_direction_audit.errors import ConstantActual
from forecast_direction_audit.errors import ConstantInput
from forecast_direction_audit.errors import EmptyInput
from forecast_direction_audit.errors import LengthMismatch
from forecast_direction_audit.errors import OutOfRange
from forecast_direction_audit.errors import TooShort

# |rho| may exceed 1 by this much through rounding alone
RHO_TOLERANCE = 1e-12


class Direction(enum.Enum):
    UP = "up"
    DOWN = "down"
    FLAT = "flat"

    @property
    def sign(self) -> int:
        return {"up": 1, "down": -1, "flat": 0}[self.value]

    @property
    def label(self) -> str:
        return self.value.capitalize()

    def flipped(self) -> "Direction":
        return {Direction.UP: Direction.DOWN, Direction.DOWN: Direction.UP}.get(self, self)


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    rmse: float
    r_squared: float
    sample_count: int


@dataclass(frozen=True)
class ReturnSummary:
    """Range-span return of a price segment.

    Prices are None when the summary was rebuilt from a results table that
    only stores the return.
    """

    start_price: Optional[float]
    end_price: Optional[float]
    range_return: float
    direction: Direction

    @classmethod
    def from_return(cls, range_return: float) -> "ReturnSummary":
        return cls(None, None, range_return, direction_of(range_return))

    @property
    def percent(self) -> float:
        return self.range_return * 100.0


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    std: float
    count: int


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    interpretation: str


def _pair(actual: Sequence[float], predicted: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.size != p.size:
        raise LengthMismatch(f"{a.size} actual values but {p.size} predictions")
    if a.size == 0:
        raise EmptyInput("error measures need at least one pair")
    return a, p


def mse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean((a - p) ** 2))


def rmse(actual, predicted) -> float:
    return math.sqrt(mse(actual, predicted))


def mae(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean(np.abs(a - p)))


def r_squared(actual, predicted) -> float:
    """1 - MSE(model) / MSE(predicting the mean of ``actual``)."""
    a, p = _pair(actual, predicted)
    baseline = float(np.mean((a - a.mean()) ** 2))
    if baseline == 0:
        raise ConstantActual("R-squared undefined for constant actual values")
    return 1.0 - mse(a, p) / baseline


def evaluate(actual, predicted) -> MetricReport:
    """All four error measures for one set of evaluation pairs."""
    a, p = _pair(actual, predicted)
    error = mse(a, p)
    return MetricReport(
        mae=mae(a, p),
        mse=error,
        rmse=math.sqrt(error),
        r_squared=r_squared(a, p),
        sample_count=int(a.size),
    )


def direction_of(range_return: float) -> Direction:
    if range_return > 0:
        return Direction.UP
    if range_return < 0:
        return Direction.DOWN
    return Direction.FLAT


def range_return(prices) -> ReturnSummary:
    """(last - first) / first over a raw price segment.

    Accepts a PriceSeries or any sequence of positive prices.
    """
    values = np.asarray(getattr(prices, "closes", prices), dtype=np.float64).ravel()
    if values.size < 2:
        raise TooShort(f"range return needs 2 prices, got {values.size}")
    start = float(values[0])
    end = float(values[-1])
    if start <= 0 or end <= 0:
        raise OutOfRange("range return needs positive prices")
    change = (end - start) / start
    return ReturnSummary(start, end, change, direction_of(change))


def series_stats(values) -> SeriesStats:
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput("statistics of an empty sequence")
    mean = float(x.mean())
    std = float(np.sqrt(np.mean((x - mean) ** 2)))
    if np.all(x == x[0]):
        std = 0.0
    return SeriesStats(mean, std, int(x.size))


def pearson(x, y) -> CorrelationResult:
    """Population Pearson coefficient with its interpretation band."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"sequences of length {a.size} and {b.size}")
    if a.size < 2:
        raise TooShort("correlation needs at least 2 pairs")
    sx = series_stats(a)
    sy = series_stats(b)
    if sx.std == 0 or sy.std == 0:
        raise ConstantInput("correlation undefined for a constant sequence")
    covariance = float(np.mean((a - sx.mean) * (b - sy.mean)))
    rho = covariance / (sx.std * sy.std)
    if abs(rho) > 1.0 + RHO_TOLERANCE:
        raise OutOfRange(f"correlation {rho!r} outside [-1, 1] beyond rounding")
    rho = min(1.0, max(-1.0, rho))
    return CorrelationResult(rho, interpret_correlation(rho))


_BANDS = (
    (0.9, "Very high"),
    (0.7, "High"),
    (0.5, "Moderate"),
    (0.3, "Low"),
)


def interpret_correlation(rho: float) -> str:
    """Rule-of-thumb band of a correlation coefficient.

    Bands are upper-inclusive on |rho|: (0.9, 1] very high, (0.7, 0.9] high,
    (0.5, 0.7] moderate, (0.3, 0.5] low, [0, 0.3] negligible.
    """
    magnitude = abs(rho)
    if not magnitude <= 1.0:
        raise OutOfRange(f"correlation {rho!r} outside [-1, 1]")
    sign = "positive" if rho > 0 else "negative"
    for lower, name in _BANDS:
        if magnitude > lower:
            return f"{name} {sign}"
    if rho == 0:
        return "Negligible"
    return f"Negligible ({sign})"
