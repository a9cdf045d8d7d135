"""JSON run configuration with strict key checking.

A run file has five sections; every key is optional and defaults are listed
in ``DEFAULTS``::

    {
      "task":     {"kind": "image", "image": null, "image_size": 256,
                   "scene": "csg-demo", "sdf_grid": null},
      "encoding": {"kind": "LPE", "frequencies": 4, "grid_res": 64, ...},
      "network":  {"hidden": [64, 64, 64], "leaky_slope": 0.01, "output_activation": null},
      "training": {"loss": "L2", "learning_rate": 0.02, "batch_size": 16384,
                   "iterations": 1000, "seed": 1, "mape_epsilon": 0.01,
                   "checkpoint_every": 0},
      "output":   {"directory": "run", "figures": true, "timing": false,
                   "image_format": "ppm", "iou_samples": 1048576}
    }

``task.image`` null selects the built-in procedural test image. The encoding
``input_dim`` follows the task (2 for images, 3 for SDFs) and a null
``output_activation`` means sigmoid for images and identity for SDFs.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .encoding import EncodingConfig
from .errors import ConfigError
from .network import OUTPUT_ACTIVATIONS
from .optim import TrainConfig

TASK_KINDS = ("image", "sdf")


@dataclass
class TaskSection:
    kind: str = "image"
    image: str | None = None
    image_size: int = 256
    scene: str = "csg-demo"
    sdf_grid: str | None = None


@dataclass
class NetworkSection:
    hidden: list = field(default_factory=lambda: [64, 64, 64])
    leaky_slope: float = 0.01
    output_activation: str | None = None


@dataclass
class OutputSection:
    directory: str = "run"
    figures: bool = True
    timing: bool = False
    image_format: str = "ppm"
    iou_samples: int = 1 << 20


@dataclass
class RunConfig:
    task: TaskSection
    encoding: EncodingConfig
    network: NetworkSection
    training: TrainConfig
    output: OutputSection

    @property
    def output_activation(self) -> str:
        if self.network.output_activation:
            return self.network.output_activation
        return "sigmoid" if self.task.kind == "image" else "identity"

    @property
    def output_dim(self) -> int:
        return 3 if self.task.kind == "image" else 1

    def to_dict(self) -> dict:
        enc = asdict(self.encoding)
        enc["levels"] = list(self.encoding.levels)
        return {
            "task": asdict(self.task),
            "encoding": enc,
            "network": asdict(self.network),
            "training": asdict(self.training),
            "output": asdict(self.output),
        }


_SECTIONS = {
    "task": TaskSection,
    "encoding": EncodingConfig,
    "network": NetworkSection,
    "training": TrainConfig,
    "output": OutputSection,
}

_TYPES = {
    "kind": str, "image": (str, type(None)), "image_size": int, "scene": str,
    "sdf_grid": (str, type(None)), "input_dim": int, "frequencies": int, "freq_offset": int,
    "grid_res": int, "feature_width": int, "levels": list, "hash_table_size": int,
    "shared_sin_cos": bool, "hidden": list, "leaky_slope": (int, float),
    "output_activation": (str, type(None)), "loss": str, "learning_rate": (int, float),
    "batch_size": int, "iterations": int, "seed": int, "mape_epsilon": (int, float),
    "checkpoint_every": int, "directory": str, "figures": bool, "timing": bool,
    "image_format": str, "iou_samples": int,
}


def _check_type(path: str, key: str, value):
    expected = _TYPES[key]
    if isinstance(value, bool) and expected in (int, (int, float)):
        raise ConfigError(f"{path}: expected a number, got a boolean")
    if not isinstance(value, expected):
        names = expected.__name__ if isinstance(expected, type) else "/".join(t.__name__ for t in expected)
        raise ConfigError(f"{path}: expected {names}, got {type(value).__name__}")


def _section(name: str, raw: dict, extra: dict | None = None):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    allowed = set(cls.__dataclass_fields__)
    values = dict(extra or {})
    for key, value in raw.items():
        if key not in allowed:
            raise ConfigError(f"{name}.{key}: unknown key")
        _check_type(f"{name}.{key}", key, value)
        values[key] = value
    try:
        return cls(**values)
    except ConfigError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    for key in raw:
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section")
    raw = copy.deepcopy(raw)
    task = _section("task", raw.get("task", {}))
    if task.kind not in TASK_KINDS:
        raise ConfigError(f"task.kind: expected one of {TASK_KINDS}, got {task.kind!r}")
    if task.image_size < 11:
        raise ConfigError("task.image_size: must be >= 11")
    dim = 2 if task.kind == "image" else 3
    enc_raw = raw.get("encoding", {"kind": "LPE"})
    if isinstance(enc_raw, dict) and enc_raw.get("input_dim", dim) != dim:
        raise ConfigError(f"encoding.input_dim: {task.kind} tasks need input_dim {dim}")
    if isinstance(enc_raw, dict) and "kind" not in enc_raw:
        raise ConfigError("encoding.kind: required")
    encoding = _section("encoding", enc_raw, {"input_dim": dim})
    network = _section("network", raw.get("network", {}))
    if not network.hidden or not all(isinstance(h, int) and not isinstance(h, bool) and h > 0
                                     for h in network.hidden):
        raise ConfigError("network.hidden: expected a non-empty list of positive integers")
    if network.output_activation is not None and network.output_activation not in OUTPUT_ACTIVATIONS:
        raise ConfigError(f"network.output_activation: expected one of {OUTPUT_ACTIVATIONS}")
    if not 0 <= network.leaky_slope < 1:
        raise ConfigError("network.leaky_slope: must be in [0, 1)")
    training = _section("training", raw.get("training", {}))
    if not 0 <= training.seed < 1 << 64:
        raise ConfigError("training.seed: must be an unsigned 64-bit integer")
    output = _section("output", raw.get("output", {}))
    if output.image_format not in ("ppm", "png"):
        raise ConfigError("output.image_format: expected 'ppm' or 'png'")
    if output.iou_samples < 1:
        raise ConfigError("output.iou_samples: must be >= 1")
    return RunConfig(task, encoding, network, training, output)


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw)


DEFAULTS = parse_config({"encoding": {"kind": "LPE"}}).to_dict()
