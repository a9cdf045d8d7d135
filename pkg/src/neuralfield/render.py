"""Sphere tracing of SDF oracles with lit-sphere (matcap) shading.

An SDF oracle is any callable mapping ``(B, 3)`` points to ``(B,)`` distances:
an analytic scene, a ``DenseSdfGrid`` or ``FieldModel.sdf``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import ImageField


@dataclass(frozen=True)
class Camera:
    position: tuple = (1.55, 1.25, 1.45)
    look_at: tuple = (0.5, 0.5, 0.5)
    up: tuple = (0.0, 0.0, 1.0)
    fov_degrees: float = 40.0
    width: int = 256
    height: int = 256

    def __post_init__(self):
        if np.allclose(self.position, self.look_at):
            raise ConfigError("camera position and look-at coincide")
        if not 0.0 < self.fov_degrees < 180.0:
            raise ConfigError("field of view must be in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise ConfigError("image size must be positive")
        if np.linalg.norm(np.cross(self.forward, np.asarray(self.up, float))) < 1e-12:
            raise ConfigError("up vector is parallel to the viewing direction")

    @property
    def forward(self) -> np.ndarray:
        f = np.asarray(self.look_at, float) - np.asarray(self.position, float)
        return f / np.linalg.norm(f)

    def basis(self):
        """Orthonormal ``(right, up, forward)`` view basis."""
        f = self.forward
        r = np.cross(f, np.asarray(self.up, float))
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        return r, u, f

    def rays(self):
        """Origins and unit directions through every pixel centre, row-major from the top row."""
        r, u, f = self.basis()
        half = np.tan(np.radians(self.fov_degrees) / 2)
        aspect = self.width / self.height
        sx = ((np.arange(self.width) + 0.5) / self.width * 2 - 1) * half * aspect
        sy = (1 - (np.arange(self.height) + 0.5) / self.height * 2) * half
        gx, gy = np.meshgrid(sx, sy)
        d = gx.reshape(-1, 1) * r + gy.reshape(-1, 1) * u + f
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        o = np.broadcast_to(np.asarray(self.position, float), d.shape).copy()
        return o, d


@dataclass(frozen=True)
class TraceConfig:
    tolerance: float = 1e-3
    max_steps: int = 256
    max_distance: float = 10.0
    normal_step: float = 1e-3

    def __post_init__(self):
        if self.tolerance <= 0 or self.normal_step <= 0:
            raise ConfigError("tolerance and normal_step must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")


def sphere_trace(sdf, origins, directions, cfg: TraceConfig = TraceConfig()):
    """March every ray by the distance bound until it hits or escapes.

    Returns ``(hit_mask, points, t)``; ``points`` holds the first position
    where the distance dropped below the tolerance (undefined for misses).
    """
    o = np.atleast_2d(np.asarray(origins, float))
    d = np.atleast_2d(np.asarray(directions, float))
    t = np.zeros(len(o))
    hit = np.zeros(len(o), dtype=bool)
    active = np.ones(len(o), dtype=bool)
    for _ in range(cfg.max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        dist = np.asarray(sdf(o[idx] + t[idx, None] * d[idx]), float).reshape(-1)
        close = dist < cfg.tolerance
        hit[idx[close]] = True
        active[idx[close]] = False
        go = idx[~close]
        t[go] += dist[~close]
        active[go[t[go] > cfg.max_distance]] = False
    return hit, o + t[:, None] * d, t


def estimate_normal(sdf, p, h: float = 1e-3) -> np.ndarray:
    """Normalised central-difference gradient; ``+z`` where the gradient vanishes."""
    if h <= 0:
        raise ConfigError("normal step must be positive")
    p = np.atleast_2d(np.asarray(p, float))
    g = np.empty_like(p)
    for k in range(3):
        off = np.zeros(3)
        off[k] = h
        g[:, k] = (np.asarray(sdf(p + off), float).reshape(-1)
                   - np.asarray(sdf(p - off), float).reshape(-1)) / (2 * h)
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    out = np.tile([0.0, 0.0, 1.0], (len(p), 1))
    ok = norm[:, 0] > 0
    out[ok] = g[ok] / norm[ok]
    return out


def lit_sphere_shade(normals, matcap: ImageField) -> np.ndarray:
    """Bilinear matcap lookup at ``uv = (0.5 + 0.5 n_x, 0.5 - 0.5 n_y)``.

    ``normals`` are in camera space (x right, y up, z toward the viewer).
    """
    tex = matcap.pixels
    h, w = tex.shape[:2]
    if h != w or h < 2:
        raise ConfigError(f"matcap must be square and at least 2x2, got {w}x{h}")
    n = np.atleast_2d(np.asarray(normals, float))
    px = np.clip((0.5 + 0.5 * n[:, 0]) * (w - 1), 0, w - 1)
    py = np.clip((0.5 - 0.5 * n[:, 1]) * (h - 1), 0, h - 1)
    x0 = np.minimum(np.floor(px).astype(int), w - 2)
    y0 = np.minimum(np.floor(py).astype(int), h - 2)
    fx = (px - x0)[:, None]
    fy = (py - y0)[:, None]
    t = tex.astype(np.float64)
    top = t[y0, x0] * (1 - fx) + t[y0, x0 + 1] * fx
    bottom = t[y0 + 1, x0] * (1 - fx) + t[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bottom * fy


def default_matcap(size: int = 255) -> ImageField:
    """Procedural matcap: Lambert-lit hemisphere with a rim highlight."""
    c = (np.arange(size) + 0.5) / size * 2 - 1
    x, y = np.meshgrid(c, -c)
    r2 = np.minimum(x * x + y * y, 1.0)
    z = np.sqrt(1.0 - r2)
    light = np.array([-0.4, 0.5, 0.77])
    light /= np.linalg.norm(light)
    lambert = np.clip(x * light[0] + y * light[1] + z * light[2], 0, 1)
    rim = (1 - z) ** 3
    base = np.array([0.78, 0.74, 0.68])
    colour = 0.08 + 0.8 * lambert[..., None] * base + 0.35 * rim[..., None]
    return ImageField(np.clip(colour, 0, 1).astype(np.float32))


def render(sdf, camera: Camera = Camera(), matcap: ImageField | None = None,
           cfg: TraceConfig = TraceConfig(), background=(1.0, 1.0, 1.0)) -> ImageField:
    """One primary ray per pixel; hits are shaded by their camera-space normal."""
    matcap = matcap if matcap is not None else default_matcap()
    o, d = camera.rays()
    hit, pts, _ = sphere_trace(sdf, o, d, cfg)
    img = np.empty((len(o), 3))
    img[:] = np.asarray(background, float)
    if np.any(hit):
        n = estimate_normal(sdf, pts[hit], cfg.normal_step)
        r, u, f = camera.basis()
        cam = np.stack([n @ r, n @ u, -(n @ f)], axis=1)
        img[hit] = lit_sphere_shade(cam, matcap)
    return ImageField(img.reshape(camera.height, camera.width, 3).astype(np.float32))
