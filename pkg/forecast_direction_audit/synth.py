"""Seeded synthetic price series standing in for market data."""
from __future__ import annotations

from dataclasses import dataclass
import datetime
import enum
import logging
from typing import List
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np

from forecast_direction_audit.errors import BadSpec
from forecast_direction_audit.ingest import PriceSeries
from forecast_direction_audit.ingest import SplitSpec

LOG = logging.getLogger(__name__)

PRICE_FLOOR = 0.01
FIRST_DATE = datetime.date(2011, 1, 3)
BATTERY_LENGTH = 200
BATTERY_START = 100.0
BATTERY_DRIFTS = (0.1, -0.1, 0.2, -0.2, 0.4, -0.4, 0.8, -0.8)


class SynthKind(enum.Enum):
    RANDOM_WALK = "random_walk"
    TRENDING = "trending"
    MEAN_REVERTING = "mean_reverting"
    SINE_PLUS_NOISE = "sine_plus_noise"
    MIRRORED_PAIR = "mirrored_pair"


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings.

    ``drift`` is the per-step change of the level, ``noise_scale`` the
    standard deviation of the Gaussian shocks.

    Random walks and mirrored pairs accumulate drift plus shocks. TRENDING
    is trend-stationary instead: a deterministic line with independent
    shocks on the level, so its deviations from the trend stay bounded
    and its increments are anti-persistent rather than a drifted walk.
    """

    kind: SynthKind
    length: int
    drift: float = 0.0
    noise_scale: float = 1.0
    seed: int = 0
    start: float = 100.0
    amplitude: float = 5.0
    period: float = 50.0
    reversion: float = 0.1
    symbol: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, SynthKind):
            try:
                object.__setattr__(self, "kind", SynthKind(str(self.kind)))
            except ValueError:
                raise BadSpec(f"unknown generator kind '{self.kind}'")
        if self.length < 2:
            raise BadSpec(f"length must be >= 2, got {self.length}")
        if self.noise_scale < 0:
            raise BadSpec(f"noise scale must be >= 0, got {self.noise_scale}")
        if not self.start > 0:
            raise BadSpec(f"start price must be positive, got {self.start}")
        if not self.period > 0:
            raise BadSpec(f"period must be positive, got {self.period}")
        if not 0 < self.reversion <= 1:
            raise BadSpec(f"reversion must lie in (0, 1], got {self.reversion}")

    @property
    def name(self) -> str:
        return self.symbol or f"{self.kind.value}-{self.seed}"


def business_days(count: int, first: datetime.date = FIRST_DATE) -> Tuple[datetime.date, ...]:
    days = []
    day = first
    while len(days) < count:
        if day.weekday() < 5:
            days.append(day)
        day += datetime.timedelta(days=1)
    return tuple(days)


def _levels(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    steps = np.arange(spec.length, dtype=np.float64)
    shocks = spec.noise_scale * rng.standard_normal(spec.length)
    kind = spec.kind
    if kind in (SynthKind.RANDOM_WALK, SynthKind.MIRRORED_PAIR):
        increments = spec.drift + shocks
        increments[0] = 0.0
        return spec.start + np.cumsum(increments)
    if kind is SynthKind.TRENDING:
        return spec.start + spec.drift * steps + shocks
    if kind is SynthKind.SINE_PLUS_NOISE:
        wave = spec.amplitude * np.sin(2.0 * np.pi * steps / spec.period)
        return spec.start + spec.drift * steps + wave + shocks
    # mean reverting around a drifting level
    target = spec.start + spec.drift * steps
    prices = np.empty(spec.length)
    prices[0] = spec.start
    for t in range(1, spec.length):
        prices[t] = prices[t - 1] + spec.reversion * (target[t] - prices[t - 1]) + shocks[t]
    return prices


def _series(symbol: str, prices: np.ndarray, spec: SynthSpec) -> PriceSeries:
    floored = int(np.sum(prices < PRICE_FLOOR))
    if floored:
        LOG.warning("%s: %d prices floored at %s", symbol, floored, PRICE_FLOOR)
        prices = np.maximum(prices, PRICE_FLOOR)
    source = f"synth:{spec.kind.value} seed={spec.seed} drift={spec.drift} noise={spec.noise_scale} floored={floored}"
    return PriceSeries(symbol, business_days(spec.length), prices, source)


def generate(spec: SynthSpec) -> Union[PriceSeries, Tuple[PriceSeries, PriceSeries]]:
    """Generate a series, or ``(s, c - s)`` with ``c = 2 * max(s)`` for mirrored pairs."""
    rng = np.random.default_rng(int(spec.seed) & 0xFFFFFFFFFFFFFFFF)
    levels = _levels(spec, rng)
    if spec.kind is not SynthKind.MIRRORED_PAIR:
        return _series(spec.name, levels, spec)
    original = _series(spec.name, levels, spec)
    ceiling = 2.0 * float(original.closes.max())
    mirror = _series(f"{spec.name}-mirror", ceiling - original.closes, spec)
    return original, mirror


def synthetic_battery(
    length: int = BATTERY_LENGTH, include_mirrored: bool = False, noise_scale: float = 1.0
) -> List[PriceSeries]:
    """24 series: random walks (seeds 1-8), trends (9-16), mean reversion (17-24).

    Trend drifts are +-0.1, 0.2, 0.4 and 0.8 times the noise scale. A
    falling trend starts high enough to end near ``BATTERY_START`` rather
    than at the price floor. With ``include_mirrored`` two mirrored pairs
    (seeds 25 and 26) are appended.
    """
    battery = []
    for seed in range(1, 9):
        battery.append(generate(SynthSpec(SynthKind.RANDOM_WALK, length, 0.0, noise_scale, seed,
                                          symbol=f"rw{seed:02d}")))
    for seed, drift in zip(range(9, 17), BATTERY_DRIFTS):
        step = drift * noise_scale
        start = BATTERY_START + max(0.0, -step) * length
        battery.append(generate(SynthSpec(SynthKind.TRENDING, length, step, noise_scale, seed, start=start,
                                          symbol=f"tr{seed:02d}")))
    for seed in range(17, 25):
        battery.append(generate(SynthSpec(SynthKind.MEAN_REVERTING, length, 0.0, noise_scale, seed,
                                          symbol=f"mr{seed:02d}")))
    if include_mirrored:
        for seed in (25, 26):
            battery.extend(generate(SynthSpec(SynthKind.MIRRORED_PAIR, length, 0.0, noise_scale, seed,
                                              symbol=f"mp{seed:02d}")))
    return battery


def battery_split(series: PriceSeries, train_fraction: float = 0.75) -> SplitSpec:
    """Split after the first ``train_fraction`` of the series' dates."""
    cut = int(round(len(series) * train_fraction))
    if not 2 <= cut <= len(series) - 2:
        raise BadSpec(f"train fraction {train_fraction} leaves no usable test range")
    return SplitSpec(series.dates[cut - 1], series.dates[cut], series.dates[-1])
