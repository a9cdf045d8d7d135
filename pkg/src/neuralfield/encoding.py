"""Input encoders mapping coordinates in [0, 1]^d to MLP input features.

Five encoders are provided: frequency (positional) encoding, single grid
encoding, local positional encoding (LPE), a multi-resolution dense grid and a
multi-resolution hash grid. Every function works on a batch of coordinates of
shape ``(B, d)``; a single coordinate of shape ``(d,)`` is promoted to a batch
of one.

Grid-backed encoders store their trainable vectors at the ``(N + 1)^d`` corner
vertices of an ``N^d`` cell lattice and interpolate them multilinearly.
Vertex ``(v_0, ..., v_{d-1})`` lives at flat row ``sum_k v_k (N + 1)^k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError
from .numerics import Rng

ENCODING_KINDS = ("PE", "GE", "LPE", "MultiGrid", "MultiHash")

# Per-axis primes of the spatial hash; the first axis is left unscrambled.
HASH_PRIMES = (1, 2654435761, 805459861)

COEFF_INIT_RANGE = 1e-4


@dataclass(frozen=True)
class EncodingConfig:
    kind: str
    input_dim: int = 2
    frequencies: int = 4
    freq_offset: int = 0
    grid_res: int = 64
    feature_width: int = 16
    levels: tuple = ()
    hash_table_size: int = 1 << 17
    shared_sin_cos: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if self.kind not in ENCODING_KINDS:
            raise ConfigError(f"unknown encoding kind {self.kind!r}; expected one of {ENCODING_KINDS}")
        if not 1 <= self.input_dim <= 3:
            raise ConfigError(f"input_dim must be 1..3, got {self.input_dim}")
        if self.frequencies < 1:
            raise ConfigError("frequencies must be >= 1")
        if self.freq_offset < 0:
            raise ConfigError("freq_offset must be >= 0")
        if self.grid_res < 1:
            raise ConfigError("grid_res must be >= 1")
        if self.feature_width < 1:
            raise ConfigError("feature_width must be >= 1")
        if self.kind in ("MultiGrid", "MultiHash"):
            if not self.levels:
                raise ConfigError(f"{self.kind} needs a non-empty list of levels")
            if min(self.levels) < 1:
                raise ConfigError("level resolutions must be >= 1")
        if self.kind == "MultiHash":
            t = self.hash_table_size
            if t < 1 or t & (t - 1):
                raise ConfigError(f"hash_table_size must be a power of two, got {t}")

    @property
    def coeffs_per_vertex(self) -> int:
        """Stored values per vertex for the single-grid encoders."""
        if self.kind == "LPE":
            per_dim = self.frequencies if self.shared_sin_cos else 2 * self.frequencies
            return self.input_dim * per_dim
        return self.feature_width

    def output_dim(self) -> int:
        if self.kind in ("PE", "LPE"):
            return 2 * self.frequencies * self.input_dim
        if self.kind == "GE":
            return self.feature_width
        return len(self.levels) * self.feature_width


@dataclass
class LatentGrid:
    """Trainable vectors on the vertex lattice of an ``N^d`` cell grid.

    ``data`` has shape ``((N + 1)^d, C)``. For LPE the ``C`` values of a
    vertex are ``d`` consecutive per-axis blocks
    ``[a_g0, a_g1, a_c1, a_s1, ..., a_c(n-1), a_s(n-1)]``, or
    ``[a_0, ..., a_(n-1)]`` when sine and cosine share coefficients.
    """

    input_dim: int
    resolution: int
    data: np.ndarray

    def __post_init__(self):
        expected = (self.resolution + 1) ** self.input_dim
        if self.data.ndim != 2 or self.data.shape[0] != expected:
            raise ConfigError(
                f"grid data shape {self.data.shape} does not match "
                f"{expected} vertices for N={self.resolution}, d={self.input_dim}"
            )

    @property
    def vertices_per_axis(self) -> int:
        return self.resolution + 1

    @property
    def coeffs_per_vertex(self) -> int:
        return self.data.shape[1]

    @classmethod
    def zeros(cls, input_dim, resolution, coeffs, dtype=np.float32) -> "LatentGrid":
        rows = (resolution + 1) ** input_dim
        return cls(input_dim, resolution, np.zeros((rows, coeffs), dtype=dtype))

    @classmethod
    def uniform(cls, input_dim, resolution, coeffs, rng: Rng,
                scale=COEFF_INIT_RANGE, dtype=np.float32) -> "LatentGrid":
        rows = (resolution + 1) ** input_dim
        data = rng.uniform_array(-scale, scale, (rows, coeffs)).astype(dtype)
        return cls(input_dim, resolution, data)


@dataclass
class HashLevel:
    """One level of a hashed grid pyramid.

    When the vertex lattice fits in the table the level is stored densely,
    otherwise vertices are hashed into ``table_size`` slots.
    """

    input_dim: int
    resolution: int
    table_size: int
    data: np.ndarray

    @property
    def dense(self) -> bool:
        return (self.resolution + 1) ** self.input_dim <= self.table_size

    @property
    def slots(self) -> int:
        return min((self.resolution + 1) ** self.input_dim, self.table_size)


@dataclass
class CellLocation:
    """Batch of cell lookups: ``z`` and ``local`` are ``(B, d)``,
    ``corner_vertices`` and ``corner_weights`` are ``(B, 2^d)``."""

    resolution: int
    z: np.ndarray
    local: np.ndarray
    corner_vertices: np.ndarray
    corner_weights: np.ndarray
    corner_coords: np.ndarray = field(repr=False, default=None)


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1)
    return x


def _check_domain(x: np.ndarray) -> None:
    if not np.all((x >= 0.0) & (x <= 1.0)):
        bad = x[~((x >= 0.0) & (x <= 1.0))]
        raise DomainError(f"coordinates must lie in [0, 1]; found {bad.ravel()[:4]}")


def _corner_bits(d: int) -> np.ndarray:
    # bits[c, k] = 1 when corner c is on the upper side of axis k
    return (np.arange(1 << d)[:, None] >> np.arange(d)[None, :]) & 1


def locate_cell(x_g, resolution: int) -> CellLocation:
    """Cell index, local coordinate and multilinear corner weights.

    ``z = floor(x * N)`` clamped to ``N - 1`` so that ``x = 1`` falls in the
    last cell with local coordinate 1.
    """
    if resolution < 1:
        raise ConfigError("resolution must be >= 1")
    x = _as_batch(x_g)
    _check_domain(x)
    d = x.shape[1]
    scaled = x * x.dtype.type(resolution)
    z = np.minimum(np.floor(scaled).astype(np.int64), resolution - 1)
    local = scaled - z.astype(x.dtype)

    bits = _corner_bits(d)
    coords = z[:, None, :] + bits[None, :, :]
    strides = (resolution + 1) ** np.arange(d, dtype=np.int64)
    vertices = coords @ strides
    upper = bits[None, :, :].astype(bool)
    factors = np.where(upper, local[:, None, :], 1.0 - local[:, None, :])
    weights = np.prod(factors, axis=2)
    return CellLocation(resolution, z, local, vertices, weights, coords)


def _interpolate(data: np.ndarray, slots: np.ndarray, weights: np.ndarray) -> np.ndarray:
    w = weights.astype(data.dtype, copy=False)
    out = w[:, 0:1] * data[slots[:, 0]]
    for c in range(1, slots.shape[1]):
        out += w[:, c:c + 1] * data[slots[:, c]]
    return out


def _scatter(rows: int, slots: np.ndarray, weights: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Adjoint of ``_interpolate``: accumulate weighted rows into a ``(rows, C)`` array."""
    cols = upstream.shape[1]
    contrib = weights[:, :, None] * upstream[:, None, :]
    flat = (slots[:, :, None] * cols + np.arange(cols)[None, None, :]).ravel()
    summed = np.bincount(flat, weights=contrib.ravel(), minlength=rows * cols)
    return summed.reshape(rows, cols).astype(upstream.dtype, copy=False)


def pe_encode(x, n: int, offset: int = 0) -> np.ndarray:
    """Frequency encoding ``[cos(2^(o+i) pi x), sin(2^(o+i) pi x)]`` per axis.

    Output has shape ``(B, 2 n d)``; axis blocks are concatenated in order.
    """
    if n < 1:
        raise ConfigError("frequency count must be >= 1")
    if offset < 0:
        raise ConfigError("frequency offset must be >= 0")
    x = _as_batch(x)
    _check_domain(x)
    freqs = np.pi * 2.0 ** np.arange(offset, offset + n)
    angles = x[:, :, None] * freqs.astype(x.dtype)
    pairs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return pairs.reshape(x.shape[0], -1)


def ge_encode(x_g, grid: LatentGrid, feature_width: Optional[int] = None) -> np.ndarray:
    """Multilinear interpolation of the corner vectors of the enclosing cell."""
    x = _as_batch(x_g)
    if x.shape[1] != grid.input_dim:
        raise ConfigError(f"coordinate dim {x.shape[1]} != grid dim {grid.input_dim}")
    if feature_width is not None and grid.coeffs_per_vertex != feature_width:
        raise ConfigError(
            f"grid stores {grid.coeffs_per_vertex} values per vertex, expected {feature_width}")
    loc = locate_cell(x, grid.resolution)
    return _interpolate(grid.data, loc.corner_vertices, loc.corner_weights)


def _lpe_layout(n: int, shared: bool) -> int:
    return n if shared else 2 * n


def _lpe_basis(local: np.ndarray, n: int, keep_lowest: bool) -> np.ndarray:
    """Sinusoid factors ``(B, d, 2n)`` multiplying the interpolated coefficients."""
    if keep_lowest:
        freqs = np.pi * 2.0 ** np.arange(0, n)
    else:
        freqs = np.pi * 2.0 ** np.arange(1, n)
    angles = local[:, :, None] * freqs.astype(local.dtype)
    waves = np.stack([np.cos(angles), np.sin(angles)], axis=-1).reshape(*local.shape, -1)
    if keep_lowest:
        return waves
    ones = np.ones((*local.shape, 2), dtype=local.dtype)
    return np.concatenate([ones, waves], axis=-1)


def _check_lpe_grid(x: np.ndarray, grid: LatentGrid, n: int, shared: bool) -> None:
    d = x.shape[1]
    if d != grid.input_dim:
        raise ConfigError(f"coordinate dim {d} != grid dim {grid.input_dim}")
    expected = d * _lpe_layout(n, shared)
    if grid.coeffs_per_vertex != expected:
        raise ConfigError(
            f"LPE grid stores {grid.coeffs_per_vertex} coefficients per vertex, "
            f"expected {expected} for d={d}, n={n}, shared={shared}")


def _lpe_forward(x, grid, n, shared, keep_lowest):
    loc = locate_cell(x, grid.resolution)
    coeffs = _interpolate(grid.data, loc.corner_vertices, loc.corner_weights)
    b, d = x.shape
    coeffs = coeffs.reshape(b, d, -1)
    if shared:
        coeffs = np.repeat(coeffs, 2, axis=2)
    basis = _lpe_basis(loc.local, n, keep_lowest).astype(grid.data.dtype, copy=False)
    features = (coeffs * basis).reshape(b, -1)
    return features, (loc, basis)


def _lpe_grad(grid, cache, upstream, shared):
    loc, basis = cache
    b, d, width = basis.shape
    g = upstream.reshape(b, d, width) * basis
    if shared:
        g = g[:, :, 0::2] + g[:, :, 1::2]
    return _scatter(grid.data.shape[0], loc.corner_vertices, loc.corner_weights,
                    g.reshape(b, -1).astype(grid.data.dtype, copy=False))


def lpe_encode(x_g, grid: LatentGrid, n: int, shared_sin_cos: bool = False,
               keep_lowest_frequency: bool = False) -> np.ndarray:
    """Local positional encoding of a batch of global coordinates.

    Per axis ``k`` the output block is
    ``[A_g0, A_g1, A_c1 cos(2 pi x_l), A_s1 sin(2 pi x_l), ...]`` where ``A``
    is the multilinear interpolation of the corner coefficients and ``x_l``
    the local coordinate. ``keep_lowest_frequency`` swaps the plain pair for
    the modulated ``cos(pi x_l), sin(pi x_l)`` pair; that variant jumps at
    cell faces and exists for testing only.
    """
    x = _as_batch(x_g)
    _check_lpe_grid(x, grid, n, shared_sin_cos)
    return _lpe_forward(x, grid, n, shared_sin_cos, keep_lowest_frequency)[0]


def lpe_backward(x_g, grid: LatentGrid, n: int, upstream, shared_sin_cos: bool = False,
                 keep_lowest_frequency: bool = False) -> np.ndarray:
    """Gradient of the loss w.r.t. every stored coefficient, shaped like ``grid.data``.

    ``upstream`` is the loss gradient w.r.t. the ``2 n d`` features of each
    sample. Only the ``2^d`` corners of each sample's cell receive nonzero
    contributions.
    """
    x = _as_batch(x_g)
    _check_lpe_grid(x, grid, n, shared_sin_cos)
    upstream = np.asarray(upstream, dtype=grid.data.dtype).reshape(x.shape[0], -1)
    if upstream.shape[1] != 2 * n * x.shape[1]:
        raise ConfigError(f"upstream width {upstream.shape[1]} != {2 * n * x.shape[1]}")
    _, cache = _lpe_forward(x, grid, n, shared_sin_cos, keep_lowest_frequency)
    return _lpe_grad(grid, cache, upstream, shared_sin_cos)


def multigrid_encode(x_g, grids: list) -> np.ndarray:
    """Concatenated grid encodings, coarse to fine."""
    if not grids:
        raise ConfigError("multigrid_encode needs at least one level")
    return np.concatenate([ge_encode(x_g, g) for g in grids], axis=1)


def hash_slots(coords: np.ndarray, table_size: int) -> np.ndarray:
    """Spatial hash of integer vertex coordinates ``(..., d)`` into ``[0, T)``."""
    coords = coords.astype(np.uint64)
    h = np.zeros(coords.shape[:-1], dtype=np.uint64)
    for k in range(coords.shape[-1]):
        h ^= coords[..., k] * np.uint64(HASH_PRIMES[k])
    return (h & np.uint64(table_size - 1)).astype(np.int64)


def _level_slots(level: HashLevel, loc: CellLocation) -> np.ndarray:
    if level.dense:
        return loc.corner_vertices
    return hash_slots(loc.corner_coords, level.table_size)


def multihash_encode(x_g, levels: list) -> np.ndarray:
    """Hashed multi-resolution grid encoding, levels concatenated coarse to fine."""
    if not levels:
        raise ConfigError("multihash_encode needs at least one level")
    x = _as_batch(x_g)
    out = []
    for level in levels:
        t = level.table_size
        if t < 1 or t & (t - 1):
            raise ConfigError(f"hash table size must be a power of two, got {t}")
        loc = locate_cell(x, level.resolution)
        out.append(_interpolate(level.data, _level_slots(level, loc), loc.corner_weights))
    return np.concatenate(out, axis=1)


def param_count(config: EncodingConfig) -> int:
    """Number of trainable values stored by the encoder's grids."""
    d = config.input_dim
    if config.kind == "PE":
        return 0
    if config.kind in ("GE", "LPE"):
        return (config.grid_res + 1) ** d * config.coeffs_per_vertex
    if config.kind == "MultiGrid":
        return sum((n + 1) ** d for n in config.levels) * config.feature_width
    return sum(min((n + 1) ** d, config.hash_table_size) for n in config.levels) * config.feature_width


# -- stateful encoders used by the trainer -------------------------------------------


class Encoder:
    """Common interface: ``encode`` returns features and a cache, ``backward``
    turns feature gradients into gradients for each array in ``params``."""

    config: EncodingConfig
    params: list

    @property
    def output_dim(self) -> int:
        return self.config.output_dim()

    def encode(self, x):
        raise NotImplementedError

    def backward(self, cache, upstream) -> list:
        raise NotImplementedError

    def __call__(self, x):
        return self.encode(x)[0]


class PositionalEncoder(Encoder):
    def __init__(self, config: EncodingConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.params = []

    def encode(self, x):
        x = _as_batch(x)
        feats = pe_encode(x, self.config.frequencies, self.config.freq_offset)
        return feats.astype(self.dtype, copy=False), None

    def backward(self, cache, upstream):
        return []


class GridEncoder(Encoder):
    def __init__(self, config: EncodingConfig, grid: LatentGrid):
        self.config = config
        self.grid = grid
        self.params = [grid.data]

    def encode(self, x):
        x = _as_batch(x)
        loc = locate_cell(x, self.grid.resolution)
        return _interpolate(self.grid.data, loc.corner_vertices, loc.corner_weights), loc

    def backward(self, cache, upstream):
        loc = cache
        return [_scatter(self.grid.data.shape[0], loc.corner_vertices, loc.corner_weights,
                         upstream.astype(self.grid.data.dtype, copy=False))]


class LocalPositionalEncoder(Encoder):
    def __init__(self, config: EncodingConfig, grid: LatentGrid, keep_lowest_frequency=False):
        self.config = config
        self.grid = grid
        self.keep_lowest_frequency = keep_lowest_frequency
        self.params = [grid.data]

    def encode(self, x):
        x = _as_batch(x)
        _check_lpe_grid(x, self.grid, self.config.frequencies, self.config.shared_sin_cos)
        return _lpe_forward(x, self.grid, self.config.frequencies,
                            self.config.shared_sin_cos, self.keep_lowest_frequency)

    def backward(self, cache, upstream):
        return [_lpe_grad(self.grid, cache, upstream, self.config.shared_sin_cos)]


class MultiGridEncoder(Encoder):
    def __init__(self, config: EncodingConfig, grids: list):
        self.config = config
        self.grids = grids
        self.params = [g.data for g in grids]

    def encode(self, x):
        x = _as_batch(x)
        locs = [locate_cell(x, g.resolution) for g in self.grids]
        feats = [_interpolate(g.data, loc.corner_vertices, loc.corner_weights)
                 for g, loc in zip(self.grids, locs)]
        return np.concatenate(feats, axis=1), locs

    def backward(self, cache, upstream):
        f = self.config.feature_width
        grads = []
        for i, (g, loc) in enumerate(zip(self.grids, cache)):
            part = upstream[:, i * f:(i + 1) * f].astype(g.data.dtype)
            grads.append(_scatter(g.data.shape[0], loc.corner_vertices, loc.corner_weights, part))
        return grads


class MultiHashEncoder(Encoder):
    def __init__(self, config: EncodingConfig, levels: list):
        self.config = config
        self.levels = levels
        self.params = [lv.data for lv in levels]

    def encode(self, x):
        x = _as_batch(x)
        cache = []
        feats = []
        for lv in self.levels:
            loc = locate_cell(x, lv.resolution)
            slots = _level_slots(lv, loc)
            cache.append((slots, loc.corner_weights))
            feats.append(_interpolate(lv.data, slots, loc.corner_weights))
        return np.concatenate(feats, axis=1), cache

    def backward(self, cache, upstream):
        f = self.config.feature_width
        grads = []
        for i, (lv, (slots, weights)) in enumerate(zip(self.levels, cache)):
            part = upstream[:, i * f:(i + 1) * f].astype(lv.data.dtype)
            grads.append(_scatter(lv.data.shape[0], slots, weights, part))
        return grads


def param_shapes(config: EncodingConfig) -> list:
    """Shapes of the encoder's trainable arrays, in ``Encoder.params`` order."""
    d = config.input_dim
    if config.kind == "PE":
        return []
    if config.kind in ("GE", "LPE"):
        return [((config.grid_res + 1) ** d, config.coeffs_per_vertex)]
    if config.kind == "MultiGrid":
        return [((n + 1) ** d, config.feature_width) for n in config.levels]
    return [(min((n + 1) ** d, config.hash_table_size), config.feature_width)
            for n in config.levels]


def build_encoder(config: EncodingConfig, rng: Optional[Rng] = None,
                  dtype=np.float32, init_scale: float = COEFF_INIT_RANGE) -> Encoder:
    """Create an encoder; grid values are drawn from U(-init_scale, init_scale).

    Without ``rng`` the grids start at zero (used when loading checkpoints).
    """
    arrays = []
    for shape in param_shapes(config):
        if rng is None:
            arrays.append(np.zeros(shape, dtype=dtype))
        else:
            arrays.append(rng.uniform_array(-init_scale, init_scale, shape).astype(dtype))
    d = config.input_dim
    if config.kind == "PE":
        return PositionalEncoder(config, dtype)
    if config.kind == "GE":
        return GridEncoder(config, LatentGrid(d, config.grid_res, arrays[0]))
    if config.kind == "LPE":
        return LocalPositionalEncoder(config, LatentGrid(d, config.grid_res, arrays[0]))
    if config.kind == "MultiGrid":
        return MultiGridEncoder(config, [LatentGrid(d, n, a) for n, a in zip(config.levels, arrays)])
    return MultiHashEncoder(config, [HashLevel(d, n, config.hash_table_size, a)
                                     for n, a in zip(config.levels, arrays)])
