"""An encoder followed by an MLP, treated as one trainable field."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .encoding import EncodingConfig, Encoder, build_encoder
from .errors import ConfigError
from .network import DEFAULT_HIDDEN, MlpParams
from .numerics import Rng

# Independent PCG streams per seed so that init and sampling never interleave.
STREAM_MLP = 1
STREAM_GRID = 2
STREAM_SAMPLER = 3


@dataclass
class FieldModel:
    encoder: Encoder
    mlp: MlpParams

    def __post_init__(self):
        if self.encoder.output_dim != self.mlp.dims[0]:
            raise ConfigError(
                f"encoder emits {self.encoder.output_dim} features but the MLP expects {self.mlp.dims[0]}")

    @property
    def config(self) -> EncodingConfig:
        return self.encoder.config

    @property
    def params(self) -> list:
        """All trainable arrays: MLP ``W0, b0, ...`` then encoder grids."""
        return self.mlp.arrays + list(self.encoder.params)

    def forward(self, x):
        feats, enc_cache = self.encoder.encode(x)
        out, mlp_cache = network.forward(self.mlp, feats)
        return out, (enc_cache, mlp_cache)

    def backward(self, cache, upstream) -> list:
        enc_cache, mlp_cache = cache
        grads = network.backward(self.mlp, mlp_cache, upstream)
        return grads.arrays + self.encoder.backward(enc_cache, grads.inputs)

    def predict(self, x, batch_size: int = 65536) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        outs = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        if not outs:
            return np.zeros((0, self.mlp.dims[-1]), dtype=np.float32)
        return np.concatenate(outs, axis=0)

    def sdf(self, p) -> np.ndarray:
        """Distance oracle usable anywhere in space.

        Inside the unit cube this is the network output; outside it adds the
        distance to the cube so that ray marching approaches the domain safely.
        """
        p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
        clamped = np.clip(p, 0.0, 1.0)
        outside = np.linalg.norm(p - clamped, axis=1)
        value = self.predict(clamped.astype(self.mlp.weights[0].dtype))[:, 0].astype(np.float64)
        return np.where(outside > 0, outside + np.maximum(value, 0.0), value)


def build_model(config: EncodingConfig, seed: int, hidden=DEFAULT_HIDDEN, output_dim: int = 3,
                output_activation: str = "sigmoid", leaky_slope: float = 0.01,
                dtype=np.float32) -> FieldModel:
    """Xavier-initialised MLP on top of a freshly initialised encoder."""
    encoder = build_encoder(config, Rng(seed, STREAM_GRID), dtype=dtype)
    dims = [encoder.output_dim, *hidden, output_dim]
    mlp = network.init_xavier(dims, Rng(seed, STREAM_MLP), output_activation, leaky_slope, dtype)
    return FieldModel(encoder, mlp)


def empty_model(config: EncodingConfig, dims, output_activation="sigmoid", leaky_slope=0.01,
                dtype=np.float32) -> FieldModel:
    """Zero-filled model with the right shapes, to be populated from a checkpoint."""
    encoder = build_encoder(config, None, dtype=dtype)
    weights = [np.zeros((a, b), dtype=dtype) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b, dtype=dtype) for b in dims[1:]]
    return FieldModel(encoder, MlpParams(weights, biases, output_activation, leaky_slope))
