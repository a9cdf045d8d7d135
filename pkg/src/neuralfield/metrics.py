"""Image quality metrics: PSNR and single-scale SSIM."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import ImageField

LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    luma_weights: tuple = LUMA_WEIGHTS

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError("SSIM window must be a positive odd size")
        if self.sigma <= 0 or self.k1 <= 0 or self.k2 <= 0:
            raise ConfigError("SSIM sigma, K1 and K2 must be positive")

    def kernel(self) -> np.ndarray:
        """Normalised 1-D Gaussian; the 2-D window is its outer product."""
        k = np.arange(self.window) - (self.window - 1) / 2
        g = np.exp(-(k ** 2) / (2 * self.sigma ** 2))
        return g / g.sum()


def _pixels(img) -> np.ndarray:
    if isinstance(img, ImageField):
        return img.pixels.astype(np.float64)
    return np.asarray(img, dtype=np.float64)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ConfigError(f"image dimensions differ: {a.shape} vs {b.shape}")


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images; ``inf`` when identical."""
    pa, pb = _pixels(a), _pixels(b)
    _same_shape(pa, pb)
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    h, w = img.shape
    rows = sum(g[i] * img[i:h - k + 1 + i] for i in range(k))
    return sum(g[i] * rows[:, i:w - k + 1 + i] for i in range(k))


def ssim_map(a, b, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Per-pixel SSIM on luminance over the positions where the window fits."""
    pa, pb = _pixels(a), _pixels(b)
    _same_shape(pa, pb)
    if pa.shape[0] < cfg.window or pa.shape[1] < cfg.window:
        raise ConfigError(f"image {pa.shape[:2]} is smaller than the {cfg.window}x{cfg.window} window")
    luma = np.asarray(cfg.luma_weights)
    x = pa @ luma if pa.ndim == 3 else pa
    y = pb @ luma if pb.ndim == 3 else pb
    g = cfg.kernel()
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x * mu_x
    var_y = _filter_valid(y * y, g) - mu_y * mu_y
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    return float(np.mean(ssim_map(a, b, cfg)))
