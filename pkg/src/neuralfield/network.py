"""Small fully connected network with leaky-ReLU hidden layers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .numerics import Rng

OUTPUT_ACTIVATIONS = ("sigmoid", "identity")
DEFAULT_HIDDEN = (64, 64, 64)


@dataclass
class MlpParams:
    """Weights are stored ``(fan_in, fan_out)`` so a layer computes ``x @ W + b``."""

    weights: list
    biases: list
    output_activation: str = "sigmoid"
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"unknown output activation {self.output_activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ConfigError(f"layer {i} input {w.shape[0]} does not chain "
                                  f"to previous output {self.weights[i - 1].shape[1]}")

    @property
    def dims(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def arrays(self) -> list:
        """Trainable arrays in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def param_count(self) -> int:
        return sum(a.size for a in self.arrays)


@dataclass
class MlpGradients:
    weights: list
    biases: list
    inputs: np.ndarray = field(repr=False)

    @property
    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_xavier(dims, rng: Rng, output_activation="sigmoid", leaky_slope=0.01,
                dtype=np.float32) -> MlpParams:
    """Xavier-uniform weights, zero biases."""
    dims = [int(v) for v in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ConfigError(f"need at least two positive layer sizes, got {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform_array(-bound, bound, (fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights, biases, output_activation, leaky_slope)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # branch form: exp never sees a large positive argument
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(params: MlpParams, batch: np.ndarray):
    """Returns ``(outputs, cache)``; the cache keeps layer inputs and pre-activations."""
    x = np.asarray(batch)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ConfigError(f"batch shape {x.shape} does not match input size {params.weights[0].shape[0]}")
    alpha = x.dtype.type(params.leaky_slope) if x.dtype.kind == "f" else params.leaky_slope
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.where(z > 0, z, alpha * z)
        elif params.output_activation == "sigmoid":
            h = sigmoid(z)
        else:
            h = z
    return h, (inputs, pre, h)


def backward(params: MlpParams, cache, upstream: np.ndarray) -> MlpGradients:
    """Reverse-mode gradients of a scalar loss given ``upstream = dL/d(outputs)``."""
    inputs, pre, out = cache
    if len(inputs) != len(params.weights) or upstream.shape != out.shape:
        raise ConfigError("cache does not belong to these parameters / upstream shape mismatch")
    g = upstream
    if params.output_activation == "sigmoid":
        g = g * out * (1 - out)
    last = len(params.weights) - 1
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for i in range(last, -1, -1):
        if i < last:
            # slope alpha at z <= 0, including the tie at exactly zero
            g = g * np.where(pre[i] > 0, 1, params.leaky_slope).astype(g.dtype)
        if inputs[i].shape[1] != params.weights[i].shape[0]:
            raise ConfigError(f"stale cache at layer {i}")
        gw[i] = inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return MlpGradients(gw, gb, g)
