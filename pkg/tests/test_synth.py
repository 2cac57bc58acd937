import logging

import numpy as np
import pytest

from forecast_direction_audit import metrics
from forecast_direction_audit import synth
from forecast_direction_audit.errors import BadSpec
from forecast_direction_audit.metrics import Direction
from forecast_direction_audit.synth import SynthKind
from forecast_direction_audit.synth import SynthSpec


def test_constant_series_is_flat():
    series = synth.generate(SynthSpec(SynthKind.RANDOM_WALK, 20, drift=0.0, noise_scale=0.0))
    assert np.all(series.closes == 100.0)
    assert metrics.range_return(series).direction is Direction.FLAT


def test_pure_drift_return():
    series = synth.generate(SynthSpec(SynthKind.TRENDING, 31, drift=1.0, noise_scale=0.0))
    assert series.closes[-1] == 130.0
    assert metrics.range_return(series).range_return == pytest.approx(0.30)


@pytest.mark.parametrize("kind", list(SynthKind))
def test_generation_is_deterministic_and_positive(kind):
    spec = SynthSpec(kind, 150, drift=0.05, noise_scale=2.0, seed=42)
    first = synth.generate(spec)
    second = synth.generate(spec)
    firsts = first if isinstance(first, tuple) else (first,)
    seconds = second if isinstance(second, tuple) else (second,)
    for a, b in zip(firsts, seconds):
        assert np.array_equal(a.closes, b.closes)
        assert np.all(a.closes > 0)
        assert len(a) == 150


def test_mirrored_pair_opposes_direction():
    for seed in range(10):
        original, mirror = synth.generate(SynthSpec(SynthKind.MIRRORED_PAIR, 60, seed=seed, symbol="mp"))
        assert mirror.symbol == "mp-mirror"
        assert np.all(mirror.closes > 0)
        assert mirror.closes.max() == pytest.approx(2.0 * original.closes.max() - original.closes.min())
        control = metrics.range_return(original).direction
        assert metrics.range_return(mirror).direction is control.flipped()


def test_flooring_is_reported(caplog):
    spec = SynthSpec(SynthKind.TRENDING, 50, drift=-10.0, noise_scale=0.0, start=100.0)
    with caplog.at_level(logging.WARNING):
        series = synth.generate(spec)
    assert series.closes.min() == synth.PRICE_FLOOR
    assert "floored" in caplog.text
    assert "floored=" in series.source


def test_bad_specs():
    with pytest.raises(BadSpec):
        SynthSpec(SynthKind.RANDOM_WALK, 1)
    with pytest.raises(BadSpec):
        SynthSpec(SynthKind.RANDOM_WALK, 10, noise_scale=-1.0)
    with pytest.raises(BadSpec):
        SynthSpec("brownian", 10)
    assert SynthSpec("sine_plus_noise", 10).kind is SynthKind.SINE_PLUS_NOISE


def test_business_days_skip_weekends():
    days = synth.business_days(10)
    assert all(day.weekday() < 5 for day in days)
    assert days[0] == synth.FIRST_DATE


def test_battery_layout():
    battery = synth.synthetic_battery(length=80, include_mirrored=True)
    assert len(battery) == 28
    assert [s.symbol for s in battery[:3]] == ["rw01", "rw02", "rw03"]
    assert battery[-1].symbol == "mp26-mirror"
    drifts = [metrics.range_return(s).direction for s in battery[8:16]]
    assert Direction.UP in drifts and Direction.DOWN in drifts


def test_battery_split():
    series = synth.synthetic_battery(length=200)[0]
    split = synth.battery_split(series)
    assert split.train_end == series.dates[149]
    assert split.test_start == series.dates[150]
    assert split.test_end == series.dates[-1]
    assert str(split) == "2011-07-29,2011-08-01,2011-10-07"


def test_battery_stays_above_the_floor():
    battery = synth.synthetic_battery(include_mirrored=True)
    for series in battery:
        assert series.closes.min() > synth.PRICE_FLOOR, series.symbol
        assert "floored=0" in series.source
        test_part = series.closes[synth.BATTERY_LENGTH * 3 // 4:]
        assert np.ptp(test_part) > 0, series.symbol
    steepest_fall = battery[15]
    assert steepest_fall.symbol == "tr16"
    assert steepest_fall.closes[-1] > 0.9 * synth.BATTERY_START
    assert metrics.range_return(steepest_fall).direction is Direction.DOWN


def test_trending_is_trend_stationary():
    steps = np.arange(4000)
    trend = synth.generate(SynthSpec(SynthKind.TRENDING, 4000, drift=0.5, noise_scale=2.0, seed=3))
    residual = trend.closes - (100.0 + 0.5 * steps)
    assert np.std(residual) == pytest.approx(2.0, rel=0.1)
    assert np.max(np.abs(residual)) < 10.0
    walk = synth.generate(SynthSpec(SynthKind.RANDOM_WALK, 4000, drift=0.5, noise_scale=2.0, seed=3, start=1000.0))
    assert np.std(walk.closes - (1000.0 + 0.5 * steps)) > 10.0
