"""Six small regression networks with hand-written forward and backward passes.

Every network maps a window of L normalized prices to one scalar. The MLP
reads the window as a flat feature vector; recurrent variants read it one
price per timestep. Gates always use the logistic sigmoid, the configured
activation only replaces the candidate/state nonlinearity. All passes are
batched over samples: inputs have shape (B, L).
"""
from __future__ import annotations

from dataclasses import dataclass
import enum
from typing import Dict
from typing import List
from typing import Sequence
from typing import Tuple

import numpy as np

from forecast_direction_audit import activations
from forecast_direction_audit.activations import ActivationKind
from forecast_direction_audit.errors import ShapeMismatch


class Architecture(enum.Enum):
    MLP = "mlp"
    RNN = "rnn"
    LSTM = "lstm"
    GRU = "gru"
    BIRNN = "birnn"
    BILSTM = "bilstm"

    @classmethod
    def parse(cls, name: str) -> "Architecture":
        try:
            return cls(name.strip().lower())
        except ValueError:
            choices = ",".join(arch.value for arch in cls)
            raise ValueError(f"unknown architecture '{name}' (expected one of {choices})")

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def order(self) -> int:
        """Position in the canonical ordering used for sorting and tie-breaks."""
        return list(Architecture).index(self)

    @property
    def bidirectional(self) -> bool:
        return self in (Architecture.BIRNN, Architecture.BILSTM)


_LABELS = {
    Architecture.MLP: "MLP",
    Architecture.RNN: "RNN",
    Architecture.LSTM: "LSTM",
    Architecture.GRU: "GRU",
    Architecture.BIRNN: "BiRNN",
    Architecture.BILSTM: "BiLSTM",
}


@dataclass(frozen=True)
class ModelSpec:
    architecture: Architecture
    window_length: int
    hidden_nodes: int
    activation: ActivationKind

    def __post_init__(self) -> None:
        if self.window_length < 1 or self.hidden_nodes < 1:
            raise ShapeMismatch(
                f"window length and hidden nodes must be >= 1, got L={self.window_length} N={self.hidden_nodes}"
            )


@dataclass(frozen=True)
class ParamShape:
    name: str
    shape: Tuple[int, ...]
    fan_in: int
    fan_out: int
    bias_fill: float = 0.0

    @property
    def is_bias(self) -> bool:
        return len(self.shape) == 1

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ParameterSet:
    """Named parameter arrays in a fixed order; immutable."""

    names: Tuple[str, ...]
    arrays: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        frozen = []
        for array in self.arrays:
            copy = np.array(array, dtype=np.float64)
            copy.setflags(write=False)
            frozen.append(copy)
        object.__setattr__(self, "arrays", tuple(frozen))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != len(self.arrays):
            raise ShapeMismatch("parameter names and arrays differ in count")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[self.names.index(name)]

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(zip(self.names, self.arrays))

    @property
    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(array.shape for array in self.arrays)

    def flat(self) -> np.ndarray:
        return np.concatenate([array.ravel() for array in self.arrays])

    def with_flat(self, vector: np.ndarray) -> "ParameterSet":
        """Same layout, values taken from a flat vector."""
        vector = np.asarray(vector, dtype=np.float64).ravel()
        expected = sum(array.size for array in self.arrays)
        if vector.size != expected:
            raise ShapeMismatch(f"flat vector has {vector.size} entries, layout needs {expected}")
        arrays = []
        offset = 0
        for array in self.arrays:
            arrays.append(vector[offset:offset + array.size].reshape(array.shape))
            offset += array.size
        return ParameterSet(self.names, tuple(arrays))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(array)) for array in self.arrays)


def _cell_layout(arch: Architecture, prefix: str, hidden: int) -> List[ParamShape]:
    if arch in (Architecture.RNN, Architecture.BIRNN):
        gates = [""]
    elif arch in (Architecture.LSTM, Architecture.BILSTM):
        gates = ["_i", "_f", "_o", "_g"]
    else:
        gates = ["_z", "_r", "_n"]
    layout = []
    for gate in gates:
        layout.append(ParamShape(f"{prefix}W{gate}", (hidden, 1), 1, hidden))
        layout.append(ParamShape(f"{prefix}U{gate}", (hidden, hidden), hidden, hidden))
        layout.append(ParamShape(f"{prefix}b{gate}", (hidden,), 1, hidden, 1.0 if gate == "_f" else 0.0))
    return layout


def parameter_layout(spec: ModelSpec) -> List[ParamShape]:
    """Ordered parameter shapes; depends only on (architecture, L, N)."""
    n = spec.hidden_nodes
    arch = spec.architecture
    if arch is Architecture.MLP:
        layout = [
            ParamShape("W_hidden", (n, spec.window_length), spec.window_length, n),
            ParamShape("b_hidden", (n,), spec.window_length, n),
        ]
        head = n
    elif arch.bidirectional:
        layout = _cell_layout(arch, "fw.", n) + _cell_layout(arch, "bw.", n)
        head = 2 * n
    else:
        layout = _cell_layout(arch, "", n)
        head = n
    layout.append(ParamShape("W_out", (1, head), head, 1))
    layout.append(ParamShape("b_out", (1,), head, 1))
    return layout


def init_parameters(spec: ModelSpec, seed: int) -> ParameterSet:
    """Uniform fan-based weights, zero biases, LSTM forget-gate biases at 1."""
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    names = []
    arrays = []
    for entry in parameter_layout(spec):
        names.append(entry.name)
        if entry.is_bias:
            arrays.append(np.full(entry.shape, entry.bias_fill))
        else:
            limit = np.sqrt(6.0 / (entry.fan_in + entry.fan_out))
            arrays.append(rng.uniform(-limit, limit, size=entry.shape))
    return ParameterSet(tuple(names), tuple(arrays))


def zero_parameters(spec: ModelSpec) -> ParameterSet:
    layout = parameter_layout(spec)
    return ParameterSet(tuple(p.name for p in layout), tuple(np.zeros(p.shape) for p in layout))


def _check(spec: ModelSpec, params: ParameterSet, inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.window_length:
        raise ShapeMismatch(f"expected windows of length {spec.window_length}, got shape {np.shape(inputs)}")
    layout = parameter_layout(spec)
    if params.names != tuple(p.name for p in layout) or params.shapes != tuple(p.shape for p in layout):
        raise ShapeMismatch(f"parameter layout does not match {spec.architecture.label} L={spec.window_length} "
                            f"N={spec.hidden_nodes}")
    return x


# Recurrent cells. Each forward returns the final hidden state and a cache
# of per-step values; backward accumulates into ``grads`` and returns the
# gradient with respect to the cell's initial hidden state (discarded).

def _affine(p: Dict[str, np.ndarray], prefix: str, gate: str, x_t: np.ndarray, h: np.ndarray) -> np.ndarray:
    return x_t @ p[f"{prefix}W{gate}"].T + h @ p[f"{prefix}U{gate}"].T + p[f"{prefix}b{gate}"]


def _accumulate(p, grads, prefix: str, gate: str, da: np.ndarray, x_t: np.ndarray, h_in: np.ndarray) -> np.ndarray:
    grads[f"{prefix}W{gate}"] += da.T @ x_t
    grads[f"{prefix}U{gate}"] += da.T @ h_in
    grads[f"{prefix}b{gate}"] += da.sum(axis=0)
    return da @ p[f"{prefix}U{gate}"]


class _RNNCell:
    def forward(self, p, prefix, steps, act, hidden):
        h = np.zeros((steps[0].shape[0], hidden))
        cache = []
        for x_t in steps:
            z = _affine(p, prefix, "", x_t, h)
            h_next = activations.apply(act, z)
            cache.append((x_t, h, z, h_next))
            h = h_next
        return h, cache

    def backward(self, p, prefix, cache, dh, act, grads):
        for x_t, h_prev, z, h in reversed(cache):
            dz = dh * activations.derivative(act, z, h)
            dh = _accumulate(p, grads, prefix, "", dz, x_t, h_prev)
        return dh


class _LSTMCell:
    def forward(self, p, prefix, steps, act, hidden):
        batch = steps[0].shape[0]
        h = np.zeros((batch, hidden))
        c = np.zeros((batch, hidden))
        cache = []
        for x_t in steps:
            i = activations.sigmoid(_affine(p, prefix, "_i", x_t, h))
            f = activations.sigmoid(_affine(p, prefix, "_f", x_t, h))
            o = activations.sigmoid(_affine(p, prefix, "_o", x_t, h))
            a_g = _affine(p, prefix, "_g", x_t, h)
            g = activations.apply(act, a_g)
            c_next = f * c + i * g
            s = activations.apply(act, c_next)
            h_next = o * s
            cache.append((x_t, h, c, i, f, o, a_g, g, c_next, s))
            h, c = h_next, c_next
        return h, cache

    def backward(self, p, prefix, cache, dh, act, grads):
        dc = np.zeros_like(dh)
        for x_t, h_prev, c_prev, i, f, o, a_g, g, c, s in reversed(cache):
            do = dh * s
            dc = dc + dh * o * activations.derivative(act, c, s)
            da_i = dc * g * i * (1.0 - i)
            da_f = dc * c_prev * f * (1.0 - f)
            da_o = do * o * (1.0 - o)
            da_g = dc * i * activations.derivative(act, a_g, g)
            dc = dc * f
            dh = (
                _accumulate(p, grads, prefix, "_i", da_i, x_t, h_prev)
                + _accumulate(p, grads, prefix, "_f", da_f, x_t, h_prev)
                + _accumulate(p, grads, prefix, "_o", da_o, x_t, h_prev)
                + _accumulate(p, grads, prefix, "_g", da_g, x_t, h_prev)
            )
        return dh


class _GRUCell:
    def forward(self, p, prefix, steps, act, hidden):
        h = np.zeros((steps[0].shape[0], hidden))
        cache = []
        for x_t in steps:
            z = activations.sigmoid(_affine(p, prefix, "_z", x_t, h))
            r = activations.sigmoid(_affine(p, prefix, "_r", x_t, h))
            a_n = _affine(p, prefix, "_n", x_t, r * h)
            n = activations.apply(act, a_n)
            h_next = (1.0 - z) * n + z * h
            cache.append((x_t, h, z, r, a_n, n))
            h = h_next
        return h, cache

    def backward(self, p, prefix, cache, dh, act, grads):
        for x_t, h_prev, z, r, a_n, n in reversed(cache):
            da_n = dh * (1.0 - z) * activations.derivative(act, a_n, n)
            da_z = dh * (h_prev - n) * z * (1.0 - z)
            d_reset_h = _accumulate(p, grads, prefix, "_n", da_n, x_t, r * h_prev)
            da_r = d_reset_h * h_prev * r * (1.0 - r)
            dh = (
                dh * z
                + d_reset_h * r
                + _accumulate(p, grads, prefix, "_z", da_z, x_t, h_prev)
                + _accumulate(p, grads, prefix, "_r", da_r, x_t, h_prev)
            )
        return dh


_CELLS = {
    Architecture.RNN: _RNNCell(),
    Architecture.BIRNN: _RNNCell(),
    Architecture.LSTM: _LSTMCell(),
    Architecture.BILSTM: _LSTMCell(),
    Architecture.GRU: _GRUCell(),
}


def _forward(spec: ModelSpec, p: Dict[str, np.ndarray], x: np.ndarray):
    arch = spec.architecture
    act = spec.activation
    n = spec.hidden_nodes
    if arch is Architecture.MLP:
        a = x @ p["W_hidden"].T + p["b_hidden"]
        features = activations.apply(act, a)
        cache = (a, features)
    else:
        cell = _CELLS[arch]
        steps = [x[:, t:t + 1] for t in range(spec.window_length)]
        if arch.bidirectional:
            h_fw, fw_cache = cell.forward(p, "fw.", steps, act, n)
            h_bw, bw_cache = cell.forward(p, "bw.", steps[::-1], act, n)
            features = np.concatenate([h_fw, h_bw], axis=1)
            cache = (fw_cache, bw_cache)
        else:
            features, cache = cell.forward(p, "", steps, act, n)
    prediction = (features @ p["W_out"].T).ravel() + p["b_out"][0]
    return prediction, features, cache


def forward_batch(spec: ModelSpec, params: ParameterSet, inputs: np.ndarray) -> np.ndarray:
    """Predictions for a (B, L) array of windows."""
    x = _check(spec, params, inputs)
    prediction, _, _ = _forward(spec, params.as_dict(), x)
    return prediction


def forward(spec: ModelSpec, params: ParameterSet, window: Sequence[float]) -> float:
    """Prediction for a single window of length L."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1:
        raise ShapeMismatch(f"expected a 1-d window, got shape {window.shape}")
    return float(forward_batch(spec, params, window)[0])


def loss_and_gradient(
    spec: ModelSpec, params: ParameterSet, inputs: np.ndarray, targets: np.ndarray
) -> Tuple[float, ParameterSet]:
    """Mean squared error over the batch and its gradient."""
    x = _check(spec, params, inputs)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if y.size != x.shape[0]:
        raise ShapeMismatch(f"{x.shape[0]} windows but {y.size} targets")
    p = params.as_dict()
    prediction, features, cache = _forward(spec, p, x)
    residual = prediction - y
    batch = y.size
    loss = float(np.mean(residual ** 2))

    grads = {name: np.zeros_like(array) for name, array in p.items()}
    d_pred = (2.0 / batch) * residual
    grads["W_out"] += d_pred[None, :] @ features
    grads["b_out"] += d_pred.sum()
    d_features = d_pred[:, None] @ p["W_out"]

    arch = spec.architecture
    act = spec.activation
    if arch is Architecture.MLP:
        a, hidden = cache
        da = d_features * activations.derivative(act, a, hidden)
        grads["W_hidden"] += da.T @ x
        grads["b_hidden"] += da.sum(axis=0)
    elif arch.bidirectional:
        n = spec.hidden_nodes
        fw_cache, bw_cache = cache
        cell = _CELLS[arch]
        cell.backward(p, "fw.", fw_cache, d_features[:, :n], act, grads)
        cell.backward(p, "bw.", bw_cache, d_features[:, n:], act, grads)
    else:
        _CELLS[arch].backward(p, "", cache, d_features, act, grads)

    return loss, ParameterSet(params.names, tuple(grads[name] for name in params.names))


def backward(
    spec: ModelSpec, params: ParameterSet, window: Sequence[float], target: float
) -> Tuple[ParameterSet, float]:
    """Gradient of (prediction - target)**2 for one sample, plus that loss."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1:
        raise ShapeMismatch(f"expected a 1-d window, got shape {window.shape}")
    loss, gradient = loss_and_gradient(spec, params, window[None, :], np.array([target]))
    return gradient, loss
