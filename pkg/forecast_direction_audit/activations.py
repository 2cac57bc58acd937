"""Activation functions selectable as a design factor."""
from __future__ import annotations

import enum

import numpy as np


class ActivationKind(enum.Enum):
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"

    @classmethod
    def parse(cls, name: str) -> "ActivationKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            choices = ", ".join(kind.value for kind in cls)
            raise ValueError(f"unknown activation '{name}' (expected one of {choices})")

    @property
    def label(self) -> str:
        return {"linear": "Linear", "sigmoid": "Sigmoid", "tanh": "Tanh", "relu": "ReLU"}[self.value]


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def apply(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    if kind is ActivationKind.LINEAR:
        return z
    if kind is ActivationKind.SIGMOID:
        return sigmoid(z)
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    return np.maximum(z, 0.0)


def derivative(kind: ActivationKind, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative at pre-activation ``z`` given ``out = apply(kind, z)``."""
    if kind is ActivationKind.LINEAR:
        return np.ones_like(z)
    if kind is ActivationKind.SIGMOID:
        return out * (1.0 - out)
    if kind is ActivationKind.TANH:
        return 1.0 - out ** 2
    return (z > 0).astype(z.dtype)
