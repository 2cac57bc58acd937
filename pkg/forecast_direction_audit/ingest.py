"""Load, validate, normalize, split and window univariate price series.

Input files follow the Yahoo Finance export layout. Only ``Date`` and
``Close`` are read; the remaining columns are tolerated and ignored.
"""
from __future__ import annotations

import codecs
import csv
from dataclasses import dataclass
import datetime
import io
import logging
import math
from typing import BinaryIO
from typing import Iterable
from typing import List
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np

from forecast_direction_audit import hurst
from forecast_direction_audit.errors import ConfigError
from forecast_direction_audit.errors import DegenerateRange
from forecast_direction_audit.errors import EmptyPartition
from forecast_direction_audit.errors import EmptySeries
from forecast_direction_audit.errors import InsufficientData
from forecast_direction_audit.errors import InvalidSeries
from forecast_direction_audit.errors import MalformedRow
from forecast_direction_audit.errors import MissingColumn

LOG = logging.getLogger(__name__)

DATE_COLUMN = "Date"
CLOSE_COLUMN = "Close"
MISSING_TOKENS = frozenset({"", "null", "nan", "na", "n/a"})


@dataclass(frozen=True)
class PriceSeries:
    """Dated closing prices of one instrument, oldest first."""

    symbol: str
    dates: Tuple[datetime.date, ...]
    closes: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        closes = np.asarray(self.closes, dtype=np.float64).copy()
        closes.setflags(write=False)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "dates", tuple(self.dates))
        if closes.ndim != 1 or len(self.dates) != closes.size:
            raise InvalidSeries("dates and closes must be equally long 1-d sequences")
        if closes.size < 2:
            raise InvalidSeries(f"{self.symbol}: at least 2 observations required")
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise InvalidSeries(f"{self.symbol}: close prices must be finite and positive")
        for earlier, later in zip(self.dates, self.dates[1:]):
            if later <= earlier:
                raise InvalidSeries(f"{self.symbol}: dates not strictly increasing at {later}")

    def __len__(self) -> int:
        return self.closes.size

    def segment(self, start: int, stop: int) -> "PriceSeries":
        """Return observations ``start`` (inclusive) to ``stop`` (exclusive)."""
        return PriceSeries(self.symbol, self.dates[start:stop], self.closes[start:stop], self.source)


@dataclass(frozen=True)
class RawPriceRows:
    """Rows as read from a file, before any validation.

    ``None`` marks a cell that was empty or could not be parsed.
    """

    symbol: str
    dates: Tuple[Optional[datetime.date], ...]
    closes: Tuple[Optional[float], ...]


@dataclass(frozen=True)
class IntegrityReport:
    missing_value_count: int
    nonpositive_price_count: int
    duplicate_date_count: int

    @property
    def ok(self) -> bool:
        return not (self.missing_value_count or self.nonpositive_price_count or self.duplicate_date_count)


@dataclass(frozen=True)
class NormalizedSeries:
    """Min-max scaled view of a PriceSeries.

    The scale is fitted on a sub-range (the training range) and applied to
    every observation, so values outside [0, 1] are expected off that range.
    """

    base: PriceSeries
    values: np.ndarray
    scale_min: float
    scale_max: float

    def __post_init__(self) -> None:
        if not self.scale_min < self.scale_max:
            raise DegenerateRange(f"scale_min {self.scale_min} must be below scale_max {self.scale_max}")
        values = np.asarray(self.values, dtype=np.float64).copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def segment(self, start: int, stop: int) -> "NormalizedSeries":
        """Slice the series, keeping the fitted scale."""
        return NormalizedSeries(self.base.segment(start, stop), self.values[start:stop], self.scale_min, self.scale_max)


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding-window samples: inputs at k..k+L-1, target at k+L+H."""

    inputs: np.ndarray
    targets: np.ndarray
    window_length: int
    hop: int
    source_indices: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64).reshape(-1, self.window_length)
        targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if inputs.shape[0] != targets.size or targets.size != len(self.source_indices):
            raise InsufficientData("inputs, targets and source indices must have equal counts")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "source_indices", np.asarray(self.source_indices, dtype=np.int64))

    def __len__(self) -> int:
        return self.targets.size


@dataclass(frozen=True)
class SplitSpec:
    train_end: datetime.date
    test_start: datetime.date
    test_end: datetime.date

    def __post_init__(self) -> None:
        if not self.train_end < self.test_start <= self.test_end:
            raise ConfigError(
                f"split requires train_end < test_start <= test_end, got "
                f"{self.train_end}, {self.test_start}, {self.test_end}"
            )

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """Parse ``train_end,test_start,test_end`` with ISO dates."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"split must be 'train_end,test_start,test_end', got '{text}'")
        try:
            train_end, test_start, test_end = (datetime.date.fromisoformat(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"split dates must be YYYY-MM-DD: {exc}")
        return cls(train_end, test_start, test_end)

    def __str__(self) -> str:
        return f"{self.train_end.isoformat()},{self.test_start.isoformat()},{self.test_end.isoformat()}"


# Six years of training data followed by a five-month test interval.
REFERENCE_SPLIT = SplitSpec(
    train_end=datetime.date(2016, 12, 31),
    test_start=datetime.date(2017, 1, 10),
    test_end=datetime.date(2017, 6, 2),
)


def _text_stream(source: Union[BinaryIO, io.TextIOBase]) -> Iterable[str]:
    if isinstance(source, io.TextIOBase):
        return source
    return codecs.getreader("utf-8-sig")(source)


def _parse_date(text: str) -> Optional[datetime.date]:
    try:
        return datetime.date.fromisoformat(text.strip())
    except ValueError:
        return None


def _parse_price(text: str) -> Optional[float]:
    cleaned = text.strip()
    if cleaned.lower() in MISSING_TOKENS:
        return None
    try:
        value = float(cleaned)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _read_table(source, symbol: str) -> Tuple[List[int], List[str], List[str]]:
    reader = csv.reader(_text_stream(source))
    try:
        header = [name.strip() for name in next(reader)]
    except StopIteration:
        raise EmptySeries(f"{symbol}: file is empty")
    for column in (DATE_COLUMN, CLOSE_COLUMN):
        if column not in header:
            raise MissingColumn(column)
    date_at = header.index(DATE_COLUMN)
    close_at = header.index(CLOSE_COLUMN)

    line_numbers: List[int] = []
    dates: List[str] = []
    closes: List[str] = []
    # the header is line 1
    for line_number, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        line_numbers.append(line_number)
        dates.append(row[date_at] if date_at < len(row) else "")
        closes.append(row[close_at] if close_at < len(row) else "")
    return line_numbers, dates, closes


def read_raw_rows(source, symbol: str) -> RawPriceRows:
    """Read rows leniently, keeping unparseable cells as ``None``."""
    _, dates, closes = _read_table(source, symbol)
    return RawPriceRows(
        symbol=symbol,
        dates=tuple(_parse_date(d) for d in dates),
        closes=tuple(_parse_price(c) for c in closes),
    )


def load_price_csv(source, symbol: str, provenance: str = "") -> PriceSeries:
    """Load a price CSV strictly.

    Args:
        source: UTF-8 byte stream (or text stream) with a header row.
        symbol: Identifier attached to the series.
        provenance: Free-text origin recorded on the series.
    Returns:
        The series sorted by date.
    Raises:
        MissingColumn: header lacks Date or Close.
        MalformedRow: a row has an unparseable or non-positive value, or
            repeats a date. The whole load fails.
        EmptySeries: fewer than 2 valid rows.
    """
    line_numbers, date_cells, close_cells = _read_table(source, symbol)
    parsed: List[Tuple[datetime.date, float, int]] = []
    for line_number, date_cell, close_cell in zip(line_numbers, date_cells, close_cells):
        day = _parse_date(date_cell)
        if day is None:
            raise MalformedRow(line_number, f"unparseable date '{date_cell}'")
        price = _parse_price(close_cell)
        if price is None:
            raise MalformedRow(line_number, f"unparseable close '{close_cell}'")
        if price <= 0:
            raise MalformedRow(line_number, f"non-positive close {price}")
        parsed.append((day, price, line_number))

    if len(parsed) < 2:
        raise EmptySeries(f"{symbol}: {len(parsed)} valid rows, at least 2 required")

    parsed.sort(key=lambda item: item[0])
    for (earlier, _, _), (later, _, line_number) in zip(parsed, parsed[1:]):
        if later == earlier:
            raise MalformedRow(line_number, f"duplicate date {later.isoformat()}")

    LOG.debug("%s: loaded %d observations", symbol, len(parsed))
    return PriceSeries(
        symbol=symbol,
        dates=tuple(day for day, _, _ in parsed),
        closes=np.array([price for _, price, _ in parsed], dtype=np.float64),
        source=provenance,
    )


def write_price_csv(series: PriceSeries, stream) -> None:
    """Write ``Date,Close`` rows readable by :func:`load_price_csv`."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow((DATE_COLUMN, CLOSE_COLUMN))
    for day, price in zip(series.dates, series.closes):
        writer.writerow((day.isoformat(), format(float(price), ".17g")))


def verify_integrity(series: Union[PriceSeries, RawPriceRows]) -> IntegrityReport:
    """Count missing values, non-positive prices and repeated dates."""
    missing = 0
    nonpositive = 0
    duplicates = 0
    seen = set()
    for day, price in zip(series.dates, series.closes):
        if day is None or price is None or not math.isfinite(price):
            missing += 1
        elif price <= 0:
            nonpositive += 1
        if day is not None:
            if day in seen:
                duplicates += 1
            seen.add(day)
    return IntegrityReport(missing, nonpositive, duplicates)


def normalize_minmax(series: PriceSeries, fit_range: Optional[range] = None) -> NormalizedSeries:
    """Scale prices with min/max taken over ``fit_range`` only.

    Args:
        series: Prices to scale.
        fit_range: Indices the scale is fitted on; the whole series by default.
    Raises:
        DegenerateRange: fewer than 2 fit points or all fit prices equal.
    """
    if fit_range is None:
        fit_range = range(len(series))
    fit = series.closes[fit_range.start:fit_range.stop:fit_range.step]
    if fit.size < 2:
        raise DegenerateRange(f"{series.symbol}: fit range holds {fit.size} points, need 2")
    scale_min = float(fit.min())
    scale_max = float(fit.max())
    if scale_min == scale_max:
        raise DegenerateRange(f"{series.symbol}: all prices in fit range equal {scale_min}")
    values = (series.closes - scale_min) / (scale_max - scale_min)
    return NormalizedSeries(series, values, scale_min, scale_max)


def denormalize(norm: NormalizedSeries, value):
    """Map a normalized value (or array) back to price units."""
    return value * (norm.scale_max - norm.scale_min) + norm.scale_min


def make_windows(norm: NormalizedSeries, window_length: int, hop: int) -> WindowedDataset:
    """Cut the series into (window, target) samples.

    Sample k uses values k..k+L-1 as inputs and value k+L+H as target, so
    ``hop`` is the number of skipped steps and 0 means next-step prediction.
    """
    if window_length < 1 or hop < 0:
        raise InsufficientData(f"invalid window length {window_length} or hop {hop}")
    total = len(norm)
    count = total - window_length - hop
    if count <= 0:
        raise InsufficientData(
            f"{norm.base.symbol}: {total} points cannot feed window {window_length} with hop {hop}"
        )
    offsets = np.arange(count)[:, None] + np.arange(window_length)[None, :]
    source_indices = np.arange(count, dtype=np.int64) + window_length + hop
    return WindowedDataset(
        inputs=norm.values[offsets],
        targets=norm.values[source_indices],
        window_length=window_length,
        hop=hop,
        source_indices=source_indices,
    )


def split_by_date(series: PriceSeries, spec: SplitSpec) -> Tuple[PriceSeries, PriceSeries]:
    """Partition into train (date <= train_end) and test (inside the test range)."""
    train_idx = [i for i, day in enumerate(series.dates) if day <= spec.train_end]
    test_idx = [i for i, day in enumerate(series.dates) if spec.test_start <= day <= spec.test_end]
    # PriceSeries needs 2 points, an empty or single-point side is unusable
    if len(train_idx) < 2 or len(test_idx) < 2:
        raise EmptyPartition(
            f"{series.symbol}: split {spec} leaves {len(train_idx)} train and {len(test_idx)} test points"
        )
    train = series.segment(train_idx[0], train_idx[-1] + 1)
    test = series.segment(test_idx[0], test_idx[-1] + 1)
    return train, test


def join_partitions(train: PriceSeries, test: PriceSeries) -> PriceSeries:
    """Concatenate train and test so one scale can be fitted on the train part."""
    return PriceSeries(
        symbol=train.symbol,
        dates=train.dates + test.dates,
        closes=np.concatenate([train.closes, test.closes]),
        source=train.source,
    )


@dataclass(frozen=True)
class ScreeningResult:
    symbol: str
    hurst: float
    r_squared: float
    label: str
    accepted: bool


def screen_series(series: PriceSeries, min_r2: float = 0.9, corrected: bool = False) -> ScreeningResult:
    """Advisory fractal-trend screening.

    The Hurst exponent is estimated on first differences of the min-max
    normalized series. ``accepted`` only reflects the regression fit quality;
    no cutoff on H itself is applied. ``corrected`` selects the Anis-Lloyd
    adjusted estimator instead of the plain slope.
    """
    norm = normalize_minmax(series)
    estimate = hurst.hurst_exponent(np.diff(norm.values), corrected=corrected)
    return ScreeningResult(
        symbol=series.symbol,
        hurst=estimate.hurst,
        r_squared=estimate.r_squared,
        label=hurst.persistence_label(estimate.hurst),
        accepted=estimate.r_squared >= min_r2,
    )
