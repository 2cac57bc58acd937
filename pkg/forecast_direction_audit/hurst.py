"""Rescaled-range (R/S) estimate of the Hurst exponent."""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Tuple

import numpy as np

from forecast_direction_audit.errors import TooShort
from forecast_direction_audit.errors import ZeroVariance

MIN_LENGTH = 64
MIN_BLOCK = 8
# below this block size the gamma-function form of the expected R/S is used
_EXACT_EXPECTATION_LIMIT = 340


@dataclass(frozen=True)
class HurstEstimate:
    hurst: float
    r_squared: float
    block_sizes: Tuple[int, ...]
    rescaled_ranges: Tuple[float, ...]


def expected_rescaled_range(size: int) -> float:
    """Expected R/S of ``size`` independent Gaussian increments.

    Anis-Lloyd expectation with the (n - 1/2)/n small-sample factor.
    """
    n = size
    tail = sum(math.sqrt((n - i) / i) for i in range(1, n))
    if n <= _EXACT_EXPECTATION_LIMIT:
        front = math.exp(math.lgamma((n - 1) / 2) - math.lgamma(n / 2)) / math.sqrt(math.pi)
    else:
        front = 1.0 / math.sqrt(n * math.pi / 2)
    return (n - 0.5) / n * front * tail


def _rescaled_range(values: np.ndarray, size: int) -> float:
    count = values.size // size
    blocks = values[: count * size].reshape(count, size)
    deviations = np.cumsum(blocks - blocks.mean(axis=1, keepdims=True), axis=1)
    ranges = deviations.max(axis=1) - deviations.min(axis=1)
    stds = blocks.std(axis=1)
    usable = stds > 0
    if not np.any(usable):
        return 0.0
    return float(np.mean(ranges[usable] / stds[usable]))


def hurst_exponent(values, min_block: int = MIN_BLOCK, corrected: bool = False) -> HurstEstimate:
    """Estimate the Hurst exponent of ``values`` by R/S analysis.

    The sequence is cut into contiguous blocks at dyadic sizes from
    ``min_block`` up to half its length. Each size contributes the mean
    rescaled range over its blocks, and H is the least-squares slope of
    log(R/S) against log(size).

    Args:
        values: Increment-like sequence (at least 64 points, not constant).
        min_block: Smallest block size.
        corrected: Opt-in Anis-Lloyd adjustment. The expected R/S of
            uncorrelated increments is subtracted before the fit and 0.5
            added back, which removes the small-block upward bias of the
            plain slope.
    Returns:
        The estimate plus the R-squared of the plain log(R/S) vs log(size)
        fit as a diagnostic.
    Raises:
        TooShort: fewer than 64 points.
        ZeroVariance: constant input.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < MIN_LENGTH:
        raise TooShort(f"Hurst estimation needs {MIN_LENGTH} points, got {x.size}")
    if np.ptp(x) == 0:
        raise ZeroVariance("Hurst estimation on a constant sequence")

    sizes = []
    ranges = []
    size = min_block
    while size <= x.size // 2:
        rs = _rescaled_range(x, size)
        if rs > 0:
            sizes.append(size)
            ranges.append(rs)
        size *= 2
    if len(sizes) < 2:
        raise ZeroVariance("too few block sizes with non-zero variance")

    log_sizes = np.log(np.array(sizes, dtype=np.float64))
    log_rs = np.log(np.array(ranges))
    slope, intercept = np.polyfit(log_sizes, log_rs, 1)
    fitted = slope * log_sizes + intercept
    total = np.sum((log_rs - log_rs.mean()) ** 2)
    r_squared = 1.0 - np.sum((log_rs - fitted) ** 2) / total if total > 0 else 1.0

    if corrected:
        expected = np.log([expected_rescaled_range(s) for s in sizes])
        excess, _ = np.polyfit(log_sizes, log_rs - expected, 1)
        estimate = 0.5 + excess
    else:
        estimate = slope
    return HurstEstimate(float(estimate), float(r_squared), tuple(sizes), tuple(ranges))


def persistence_label(value: float) -> str:
    if value > 0.55:
        return "persistent"
    if value < 0.45:
        return "anti-persistent"
    return "random"
