"""Deterministic full-batch training, prediction and model persistence."""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import List
from typing import Optional
from typing import TextIO
from typing import Tuple

import numpy as np

from forecast_direction_audit import models
from forecast_direction_audit.activations import ActivationKind
from forecast_direction_audit.errors import InsufficientData
from forecast_direction_audit.errors import IoFailure
from forecast_direction_audit.errors import ModelError
from forecast_direction_audit.errors import NonFiniteLoss
from forecast_direction_audit.errors import ShapeMismatch
from forecast_direction_audit.ingest import WindowedDataset
from forecast_direction_audit.models import Architecture
from forecast_direction_audit.models import ModelSpec
from forecast_direction_audit.models import ParameterSet

LOG = logging.getLogger(__name__)

MODEL_FORMAT_HEADER = "# forecast-direction-audit model v1"
# gradient components below this size are compared in absolute terms
GRADIENT_FLOOR = 1e-5

_DEFAULT_LEARNING_RATES = {
    ActivationKind.SIGMOID: 0.05,
    ActivationKind.TANH: 0.05,
    ActivationKind.RELU: 0.005,
    ActivationKind.LINEAR: 0.005,
}


def default_learning_rate(activation: ActivationKind) -> float:
    return _DEFAULT_LEARNING_RATES[activation]


@dataclass(frozen=True)
class TrainConfig:
    """Plain gradient descent settings.

    ``learning_rate`` of None picks the per-activation default.
    """

    epochs: int
    seed: int
    learning_rate: Optional[float] = None

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ModelError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ModelError(f"learning rate must be positive, got {self.learning_rate}")

    def rate_for(self, activation: ActivationKind) -> float:
        if self.learning_rate is None:
            return default_learning_rate(activation)
        return self.learning_rate


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    parameters: ParameterSet
    loss_curve: Tuple[float, ...]
    seed: int


def train(spec: ModelSpec, config: TrainConfig, data: WindowedDataset) -> TrainedModel:
    """Fit ``spec`` to ``data`` with full-batch gradient descent.

    Raises:
        ShapeMismatch: dataset window length differs from ``spec.window_length``.
        NonFiniteLoss: loss or parameters stop being finite; carries the epoch.
    """
    if len(data) == 0:
        raise InsufficientData("cannot train on an empty dataset")
    if data.window_length != spec.window_length:
        raise ShapeMismatch(f"dataset windows have length {data.window_length}, model expects {spec.window_length}")

    params = models.init_parameters(spec, config.seed)
    rate = config.rate_for(spec.activation)
    curve: List[float] = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            loss, gradient = models.loss_and_gradient(spec, params, data.inputs, data.targets)
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch)
            curve.append(loss)
            params = params.with_flat(params.flat() - rate * gradient.flat())
            if not params.is_finite():
                raise NonFiniteLoss(epoch)
            LOG.debug("%s epoch %d loss %.6g", spec.architecture.label, epoch, loss)
    return TrainedModel(spec=spec, parameters=params, loss_curve=tuple(curve), seed=config.seed)


def predict(model: TrainedModel, inputs: np.ndarray) -> np.ndarray:
    return models.forward_batch(model.spec, model.parameters, inputs)


def predict_series(model: TrainedModel, data: WindowedDataset) -> List[Tuple[float, float]]:
    """(predicted, actual) per sample, in source order."""
    if data.window_length != model.spec.window_length:
        raise ShapeMismatch(
            f"dataset windows have length {data.window_length}, model expects {model.spec.window_length}"
        )
    if len(data) == 0:
        return []
    predicted = predict(model, data.inputs)
    return [(float(p), float(a)) for p, a in zip(predicted, data.targets)]


def numerical_gradient(
    spec: ModelSpec, params: ParameterSet, inputs: np.ndarray, targets: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of the mean squared error, flat layout."""
    base = params.flat()
    grad = np.zeros_like(base)
    for k in range(base.size):
        shifted = base.copy()
        shifted[k] = base[k] + step
        upper, _ = models.loss_and_gradient(spec, params.with_flat(shifted), inputs, targets)
        shifted[k] = base[k] - step
        lower, _ = models.loss_and_gradient(spec, params.with_flat(shifted), inputs, targets)
        grad[k] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor: float = GRADIENT_FLOOR) -> np.ndarray:
    """Per-component ``|a - n| / max(|a|, |n|, floor)``.

    Components smaller than ``floor`` in both gradients are judged on their
    absolute difference scaled by ``floor``.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(
    spec: ModelSpec,
    params: ParameterSet,
    inputs: np.ndarray,
    targets: np.ndarray,
    step: float = 1e-5,
    floor: float = GRADIENT_FLOOR,
) -> float:
    """Max per-component relative error between backprop and finite differences."""
    _, analytic = models.loss_and_gradient(spec, params, inputs, targets)
    numeric = numerical_gradient(spec, params, inputs, targets, step)
    return float(np.max(relative_error(analytic.flat(), numeric, floor)))


def save_model(model: TrainedModel, stream: TextIO) -> None:
    """Write the header and one parameter per line with 17 significant digits."""
    spec = model.spec
    flat = model.parameters.flat()
    lines = [
        MODEL_FORMAT_HEADER,
        f"architecture={spec.architecture.value}",
        f"window_length={spec.window_length}",
        f"hidden_nodes={spec.hidden_nodes}",
        f"activation={spec.activation.value}",
        f"seed={model.seed}",
        f"parameters={flat.size}",
    ]
    lines.extend(format(value, ".17g") for value in flat)
    try:
        stream.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"could not write model: {exc}")


def load_model(stream: TextIO) -> TrainedModel:
    """Read a model written by :func:`save_model`; the loss curve is not stored."""
    lines = [line.strip() for line in stream.read().splitlines() if line.strip()]
    if not lines or lines[0] != MODEL_FORMAT_HEADER:
        raise IoFailure("not a forecast-direction-audit model file")
    header = {}
    body_start = 1
    for body_start, line in enumerate(lines[1:], start=1):
        if "=" not in line:
            break
        key, value = line.split("=", 1)
        header[key] = value
    else:
        body_start = len(lines)
    try:
        spec = ModelSpec(
            architecture=Architecture.parse(header["architecture"]),
            window_length=int(header["window_length"]),
            hidden_nodes=int(header["hidden_nodes"]),
            activation=ActivationKind.parse(header["activation"]),
        )
        seed = int(header["seed"])
        count = int(header["parameters"])
        values = np.array([float(v) for v in lines[body_start:]], dtype=np.float64)
    except (KeyError, ValueError) as exc:
        raise IoFailure(f"malformed model file: {exc}")
    if values.size != count:
        raise IoFailure(f"model file declares {count} parameters but holds {values.size}")
    parameters = models.zero_parameters(spec).with_flat(values)
    return TrainedModel(spec=spec, parameters=parameters, loss_curve=(), seed=seed)
