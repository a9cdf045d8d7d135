"""Supervised coordinate fields: RGB images over [0,1]^2 and SDF scenes over [0,1]^3."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import Rng

IOU_SAMPLES = 1 << 20
_CHUNK = 1 << 16


@dataclass
class ImageField:
    """RGB image with channels in [0, 1], stored as ``(height, width, 3)``.

    Pixel ``(row j, column i)`` sits at coordinate ``((i + 0.5) / W, (j + 0.5) / H)``.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ConfigError(f"image must have shape (H, W, 3), got {px.shape}")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def coordinates(self) -> np.ndarray:
        """Pixel-centre coordinates of every pixel in row-major order, ``(H*W, 2)``."""
        u = (np.arange(self.width, dtype=np.float32) + 0.5) / self.width
        v = (np.arange(self.height, dtype=np.float32) + 0.5) / self.height
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu.ravel(), vv.ravel()], axis=1)


def sample_image(field: ImageField, rng: Rng, count: int = 1):
    """Uniformly chosen pixel centres (with replacement) and their colours."""
    w, h = field.width, field.height
    flat = rng.integers(w * h, count)
    i = flat % w
    j = flat // w
    coords = np.stack([(i + 0.5) / w, (j + 0.5) / h], axis=1).astype(np.float32)
    return coords, field.pixels[j, i]


def _value_noise(rng: Rng, size: int, cells: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [-1, 1] with ``cells`` cells per side."""
    lattice = rng.uniform_array(-1.0, 1.0, (cells + 1, cells + 1))
    t = (np.arange(size) + 0.5) / size * cells
    i0 = np.minimum(t.astype(int), cells - 1)
    f = t - i0
    f = f * f * (3 - 2 * f)
    a = lattice[i0][:, i0] * (1 - f)[None, :] + lattice[i0][:, i0 + 1] * f[None, :]
    b = lattice[i0 + 1][:, i0] * (1 - f)[None, :] + lattice[i0 + 1][:, i0 + 1] * f[None, :]
    return a * (1 - f)[:, None] + b * f[:, None]


def make_test_image(size: int = 256, seed: int = 7) -> ImageField:
    """Deterministic high-detail RGB test pattern.

    Mixes multi-octave value noise down to two-pixel cells, a zone plate whose
    frequency sweeps up to near Nyquist, and a few hard-edged discs and bars,
    so the image has content at every scale between the whole frame and a
    single pixel.
    """
    rng = Rng(seed, stream=11)
    img = np.zeros((size, size, 3))
    octaves = [c for c in (4, 8, 16, 32, 64, 128) if c <= size // 2]
    for ch in range(3):
        layer = np.zeros((size, size))
        for k, cells in enumerate(octaves):
            layer += 0.55 ** (0.6 * k) * _value_noise(rng, size, cells)
        img[:, :, ch] = layer
    img = 0.5 + 0.3 * img

    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx + 0.5) / size
    v = (yy + 0.5) / size
    r2 = (u - 0.72) ** 2 + (v - 0.3) ** 2
    plate = 0.5 + 0.5 * np.cos(np.pi * size * 1.6 * r2)
    mask = np.clip((0.24 - np.sqrt(r2)) * 40, 0, 1)
    img = img * (1 - mask[..., None]) + plate[..., None] * np.array([0.9, 0.75, 0.3]) * mask[..., None]

    for _ in range(12):
        cx, cy = rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)
        rad = rng.uniform(0.01, 0.06)
        colour = np.array([rng.uniform(0, 1) for _ in range(3)])
        disc = (u - cx) ** 2 + (v - cy) ** 2 < rad ** 2
        img[disc] = colour
    stripes = (np.floor(u * size / 3) % 2 == 0) & (v > 0.82) & (v < 0.92) & (u < 0.45)
    img[stripes] = [0.1, 0.1, 0.15]
    return ImageField(np.clip(img, 0.0, 1.0).astype(np.float32))


# -- SDF scenes --------------------------------------------------------------------


def _pts(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return p.reshape(1, 3) if p.ndim == 1 else p


class SdfNode:
    """Node of an SDF expression tree; calling it on ``(B, 3)`` points gives ``(B,)`` distances."""

    def __call__(self, p) -> np.ndarray:
        return self.evaluate(_pts(p))

    def evaluate(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class Sphere(SdfNode):
    center: tuple
    radius: float

    def evaluate(self, p):
        return np.linalg.norm(p - np.asarray(self.center), axis=1) - self.radius


@dataclass
class Box(SdfNode):
    center: tuple
    half_extents: tuple

    def evaluate(self, p):
        q = np.abs(p - np.asarray(self.center)) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


@dataclass
class Torus(SdfNode):
    """Torus around an axis parallel to z."""

    center: tuple
    major_radius: float
    minor_radius: float

    def evaluate(self, p):
        d = p - np.asarray(self.center)
        ring = np.hypot(d[:, 0], d[:, 1]) - self.major_radius
        return np.hypot(ring, d[:, 2]) - self.minor_radius


@dataclass
class Ridge(SdfNode):
    """Bumps ``amplitude * max(sin(frequency * angle), 0)`` raised around the z axis through ``center``.

    The result is a distance bound, not an exact distance.
    """

    child: SdfNode
    center: tuple
    amplitude: float
    frequency: float

    def evaluate(self, p):
        d = p - np.asarray(self.center)
        angle = np.arctan2(d[:, 1], d[:, 0])
        return self.child.evaluate(p) - self.amplitude * np.maximum(np.sin(self.frequency * angle), 0.0)


@dataclass
class Union(SdfNode):
    a: SdfNode
    b: SdfNode

    def evaluate(self, p):
        return np.minimum(self.a.evaluate(p), self.b.evaluate(p))


@dataclass
class Intersection(SdfNode):
    a: SdfNode
    b: SdfNode

    def evaluate(self, p):
        return np.maximum(self.a.evaluate(p), self.b.evaluate(p))


@dataclass
class Subtraction(SdfNode):
    """``a`` with ``b`` carved out."""

    a: SdfNode
    b: SdfNode

    def evaluate(self, p):
        return np.maximum(self.a.evaluate(p), -self.b.evaluate(p))


@dataclass
class Plane(SdfNode):
    """Half-space below ``height`` along z."""

    height: float

    def evaluate(self, p):
        return p[:, 2] - self.height


class DenseSdfGrid(SdfNode):
    """Distance samples on a vertex lattice spanning [0,1]^3, trilinearly interpolated.

    ``samples`` has shape ``(nz, ny, nx)`` so the flattened order is x-fastest.
    """

    def __init__(self, samples: np.ndarray):
        samples = np.asarray(samples, dtype=np.float32)
        if samples.ndim != 3 or min(samples.shape) < 2:
            raise ConfigError(f"dense SDF grid needs >= 2 samples per axis, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("dense SDF grid contains non-finite samples")
        self.samples = samples

    @property
    def resolution(self) -> tuple:
        nz, ny, nx = self.samples.shape
        return nx, ny, nz

    def evaluate(self, p):
        res = np.array(self.resolution)
        t = np.clip(p, 0.0, 1.0) * (res - 1)
        i0 = np.minimum(np.floor(t).astype(np.int64), res - 2)
        f = t - i0
        s = self.samples.astype(np.float64)
        out = np.zeros(p.shape[0])
        for corner in range(8):
            bx, by, bz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
            w = ((f[:, 0] if bx else 1 - f[:, 0]) * (f[:, 1] if by else 1 - f[:, 1])
                 * (f[:, 2] if bz else 1 - f[:, 2]))
            out += w * s[i0[:, 2] + bz, i0[:, 1] + by, i0[:, 0] + bx]
        return out

    @classmethod
    def from_scene(cls, scene: SdfNode, resolution: int) -> "DenseSdfGrid":
        t = np.linspace(0.0, 1.0, resolution)
        z, y, x = np.meshgrid(t, t, t, indexing="ij")
        pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
        return cls(scene(pts).reshape(resolution, resolution, resolution))


def eval_sdf(scene: SdfNode, p) -> np.ndarray:
    """Signed distance of ``scene`` at ``p``: negative inside, positive outside."""
    return scene(p)


DEMO_SCENES = ("sphere", "csg-demo")


def make_demo_scene(name: str) -> SdfNode:
    """Analytic scenes inside the unit cube.

    ``sphere`` is a centred sphere of radius 0.3. ``csg-demo`` unions a torus
    carrying twelve ridges with a box that has a sphere carved out of it, so it
    mixes flat faces, sharp edges, smooth curvature and small bumps.
    """
    if name == "sphere":
        return Sphere((0.5, 0.5, 0.5), 0.3)
    if name == "csg-demo":
        torus_center = (0.34, 0.34, 0.38)
        torus = Ridge(Torus(torus_center, 0.2, 0.085), torus_center, 0.025, 12.0)
        box_center = (0.64, 0.64, 0.64)
        hollow = Subtraction(Box(box_center, (0.2, 0.2, 0.2)), Sphere(box_center, 0.245))
        return Union(torus, hollow)
    raise ConfigError(f"unknown demo scene {name!r}; expected one of {DEMO_SCENES}")


def fd_gradient(sdf, p: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of a batched SDF oracle at ``(B, 3)`` points."""
    grad = np.empty_like(p)
    for k in range(3):
        off = np.zeros(3)
        off[k] = h
        grad[:, k] = (sdf(p + off) - sdf(p - off)) / (2 * h)
    return grad


def sample_sdf(scene, rng: Rng, count: int, near_fraction: float = 0.5,
               jitter: float = 0.01, steps: int = 3, damping: float = 0.9):
    """Training points for an SDF scene and their reference distances.

    A ``near_fraction`` share of the points starts uniform and is pulled
    toward the surface by damped projection steps, then jittered.
    """
    n_near = int(round(count * near_fraction))
    n_uniform = count - n_near
    uniform = rng.uniform_array(0.0, 1.0, (n_uniform, 3))
    near = rng.uniform_array(0.0, 1.0, (n_near, 3))
    for _ in range(steps):
        g = fd_gradient(scene, near)
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        direction = np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)
        near = np.clip(near - damping * scene(near)[:, None] * direction, 0.0, 1.0)
    near = np.clip(near + jitter * rng.normal_array((n_near, 3)), 0.0, 1.0)
    pts = np.concatenate([uniform, near], axis=0)
    return pts.astype(np.float32), scene(pts.astype(np.float32).astype(np.float64)).astype(np.float32)


def iou(model_a, model_b, samples: int = IOU_SAMPLES, rng: Rng | None = None) -> float:
    """Monte-Carlo volume IoU of the negative regions of two SDF oracles over [0,1]^3.

    Returns 1 when neither oracle has any interior sample.
    """
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    rng = rng if rng is not None else Rng(0)
    inter = union = 0
    done = 0
    while done < samples:
        k = min(_CHUNK, samples - done)
        pts = rng.uniform_array(0.0, 1.0, (k, 3))
        a = np.asarray(model_a(pts)) < 0
        b = np.asarray(model_b(pts)) < 0
        inter += int(np.count_nonzero(a & b))
        union += int(np.count_nonzero(a | b))
        done += k
    return 1.0 if union == 0 else inter / union


# -- tasks -------------------------------------------------------------------------


class ImageTask:
    kind = "image"
    input_dim = 2
    output_dim = 3
    output_activation = "sigmoid"

    def __init__(self, image: ImageField):
        self.image = image

    def sample(self, rng: Rng, count: int):
        return sample_image(self.image, rng, count)


class SdfTask:
    kind = "sdf"
    input_dim = 3
    output_dim = 1
    output_activation = "identity"

    def __init__(self, scene: SdfNode):
        self.scene = scene

    def sample(self, rng: Rng, count: int):
        pts, dist = sample_sdf(self.scene, rng, count)
        return pts, dist[:, None]
