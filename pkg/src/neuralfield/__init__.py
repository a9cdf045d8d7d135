"""Coordinate-network regression with local positional encoding and grid baselines."""
from .encoding import EncodingConfig, LatentGrid, build_encoder, param_count
from .errors import ConfigError, DomainError, FormatError, NeuralFieldError, NumericError
from .fields import ImageField, ImageTask, SdfTask, make_demo_scene, make_test_image
from .model import FieldModel, build_model
from .numerics import Rng
from .optim import TrainConfig, train

__all__ = [
    "ConfigError", "DomainError", "EncodingConfig", "FieldModel", "FormatError", "ImageField",
    "ImageTask", "LatentGrid", "NeuralFieldError", "NumericError", "Rng", "SdfTask", "TrainConfig",
    "build_encoder", "build_model", "make_demo_scene", "make_test_image", "param_count", "train",
]
__version__ = "0.1.0"
