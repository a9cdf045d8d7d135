"""Losses, the Adam optimizer and the joint encoder/MLP training loop."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NumericError
from .model import STREAM_SAMPLER, FieldModel
from .numerics import Rng

LOSSES = ("L2", "MAPE")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-15


def _check_pair(pred, target):
    if pred.shape != target.shape:
        raise ConfigError(f"prediction shape {pred.shape} != target shape {target.shape}")


def l2_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every entry and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    _check_pair(pred, target)
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = diff * pred.dtype.type(2.0 / diff.size)
    return loss, grad


def mape_loss(pred: np.ndarray, target: np.ndarray, eps: float = 0.01):
    """Mean of ``|pred - target| / (|target| + eps)`` and its (sub)gradient; sign(0) = 0."""
    if eps <= 0:
        raise ConfigError(f"MAPE epsilon must be > 0, got {eps}")
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    _check_pair(pred, target)
    diff = pred - target
    scale = np.abs(target) + pred.dtype.type(eps)
    loss = float(np.mean(np.abs(diff).astype(np.float64) / scale))
    grad = np.sign(diff) / (scale * pred.dtype.type(diff.size))
    return loss, grad.astype(pred.dtype, copy=False)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, params, **kwargs) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kwargs)


def adam_step(params: list, grads: list, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, applied in place.

    Raises ``NumericError`` before touching anything if a gradient is not finite.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ConfigError("parameter, gradient and moment lists differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ConfigError(f"array {i}: parameter {p.shape} vs gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter array {i}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        dt = p.dtype.type
        m *= dt(state.beta1)
        m += dt(1.0 - state.beta1) * g
        v *= dt(state.beta2)
        v += dt(1.0 - state.beta2) * (g * g)
        step = (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(state.eps))
        p -= dt(lr) * step


@dataclass
class TrainConfig:
    loss: str = "L2"
    learning_rate: float = 0.02
    batch_size: int = 16384
    iterations: int = 1000
    seed: int = 1
    mape_epsilon: float = 0.01
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.mape_epsilon <= 0:
            raise ConfigError("mape_epsilon must be > 0")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")

    def loss_fn(self) -> Callable:
        if self.loss == "L2":
            return l2_loss
        return lambda pred, target: mape_loss(pred, target, self.mape_epsilon)


@dataclass
class TrainState:
    """Everything needed to continue training exactly where it stopped."""

    model: FieldModel
    adam: AdamState
    rng: Rng
    iteration: int = 0
    history: list = field(default_factory=list)


def new_train_state(model: FieldModel, cfg: TrainConfig) -> TrainState:
    return TrainState(model, AdamState.zeros_like(model.params), Rng(cfg.seed, STREAM_SAMPLER))


def loss_and_grads(model: FieldModel, x, target, loss_fn=l2_loss):
    pred, cache = model.forward(x)
    loss, upstream = loss_fn(pred, target)
    return loss, model.backward(cache, upstream)


def train(task, model_or_state, cfg: TrainConfig,
          on_checkpoint: Optional[Callable[[TrainState], None]] = None,
          timing: bool = True) -> TrainState:
    """Run ``cfg.iterations`` joint optimisation steps.

    Each step samples ``batch_size`` coordinates from ``task``, runs encoder
    and MLP forward, backpropagates through both and applies one Adam step to
    all trainables. ``history`` collects ``(iteration, loss, wall_ms)`` rows
    (``wall_ms`` is ``None`` without timing). Passing a ``TrainState``
    resumes it, in which case ``cfg.iterations`` more steps are taken.
    """
    state = model_or_state if isinstance(model_or_state, TrainState) else new_train_state(model_or_state, cfg)
    model = state.model
    if model.encoder.config.input_dim != task.input_dim:
        raise ConfigError(f"encoder input_dim {model.encoder.config.input_dim} != task dim {task.input_dim}")
    if model.mlp.dims[-1] != task.output_dim:
        raise ConfigError(f"model output {model.mlp.dims[-1]} != task output {task.output_dim}")
    loss_fn = cfg.loss_fn()
    params = model.params
    start = time.perf_counter()
    for _ in range(cfg.iterations):
        x, y = task.sample(state.rng, cfg.batch_size)
        loss, grads = loss_and_grads(model, x, y, loss_fn)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at iteration {state.iteration}")
        try:
            adam_step(params, grads, state.adam, cfg.learning_rate)
        except NumericError as exc:
            raise NumericError(f"iteration {state.iteration}: {exc}") from exc
        wall = (time.perf_counter() - start) * 1e3 if timing else None
        state.history.append((state.iteration, loss, wall))
        state.iteration += 1
        if on_checkpoint and cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
            on_checkpoint(state)
    return state
