import datetime

import numpy as np
import pytest

from forecast_direction_audit.activations import ActivationKind
from forecast_direction_audit.ingest import PriceSeries
from forecast_direction_audit.oed import FactorTable


def make_series(closes, symbol="TEST", first=datetime.date(2017, 1, 2)):
    """Consecutive calendar days starting at ``first``."""
    dates = [first + datetime.timedelta(days=i) for i in range(len(closes))]
    return PriceSeries(symbol, tuple(dates), np.asarray(closes, dtype=np.float64))


def write_price_file(directory, symbol, closes, first=datetime.date(2017, 1, 2)):
    path = directory / f"{symbol}.csv"
    lines = ["Date,Open,High,Low,Close,Adj Close,Volume"]
    for i, close in enumerate(closes):
        day = first + datetime.timedelta(days=i)
        lines.append(f"{day.isoformat()},1,1,1,{close!r},1,100")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def tiny_factors():
    # small windows and few epochs keep experiment tests fast
    return FactorTable(
        window_lengths=(2, 3, 4, 5),
        hops=(0, 1, 2, 3),
        hidden_nodes=(2, 3, 4, 5),
        epochs=(1, 2, 3, 4),
        activations=(ActivationKind.LINEAR, ActivationKind.SIGMOID, ActivationKind.TANH, ActivationKind.RELU),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
