"""File formats: PPM/PNG images, dense SDF grids and training checkpoints.

All multi-byte fields are little-endian.

SDF grid file (``SDFG1``)::

    offset  size      field
    0       5         magic b"SDFG1"
    5       12        u32 nx, u32 ny, u32 nz (samples per axis)
    17      4*nx*ny*nz  f32 distances, x fastest, then y, then z

Checkpoint file (``NFLB1``)::

    offset  size      field
    0       5         magic b"NFLB1"
    5       4         u32 L, length of the metadata block
    9       L         UTF-8 JSON metadata (encoding config, activations, task, training)
    .       4         u32 K, number of MLP layer sizes
    .       4*K       u32 layer sizes, input first
    .       4         u32 P, number of trainable arrays
    .       8*P       u32 rows, u32 cols of each array (biases are 1 x n)
    .       4*S       f32 parameters: W0, b0, W1, b1, ..., then encoder grids
    .       4*S       f32 Adam first moments, same order
    .       4*S       f32 Adam second moments, same order
    .       8         u64 Adam step count
    .       8         u64 training iteration
    .       16        u64 sampler PCG state, u64 sampler PCG increment
    .       4         u32 CRC-32 of every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoding import EncodingConfig, param_shapes
from .errors import FormatError
from .fields import DenseSdfGrid, ImageField
from .model import FieldModel, empty_model
from .numerics import Rng
from .optim import AdamState, TrainState

CHECKPOINT_MAGIC = b"NFLB1"
SDF_GRID_MAGIC = b"SDFG1"
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


# -- images ------------------------------------------------------------------------


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255, rounding halves away from zero."""
    v = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def _ppm_token(data: bytes, pos: int):
    """Next whitespace-delimited header token, skipping ``#`` comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError(f"PPM header truncated at byte {start}")
    return data[start:pos], start, pos


def decode_ppm(data: bytes) -> ImageField:
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM: expected magic 'P6' at byte 0, found {data[:2]!r}")
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        tok, start, pos = _ppm_token(data, pos)
        if not tok.isdigit():
            raise FormatError(f"PPM {name} at byte {start} is not a decimal integer: {tok!r}")
        values.append(int(tok))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise FormatError(f"PPM dimensions must be positive, got {width}x{height}")
    if maxval != 255:
        raise FormatError(f"PPM maxval must be 255, got {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(f"PPM header must end with one whitespace byte at byte {pos}")
    pos += 1
    expected = width * height * 3
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise FormatError(
            f"PPM payload truncated at byte {pos + len(payload)}: expected {expected} bytes, got {len(payload)}")
    px = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ImageField(px.astype(np.float32) / 255.0)


def encode_ppm(img: ImageField) -> bytes:
    q = quantize(img.pixels)
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + q.tobytes()


def read_image(path) -> ImageField:
    """Read a binary PPM (P6, maxval 255) or an 8-bit RGB PNG."""
    data = Path(path).read_bytes()
    if data.startswith(PNG_SIGNATURE):
        return _read_png(path)
    return decode_ppm(data)


def write_image(path, img: ImageField) -> None:
    """Write ``.png`` files as 8-bit RGB PNG and everything else as binary PPM."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        _write_png(path, img)
    else:
        path.write_bytes(encode_ppm(img))


def _read_png(path) -> ImageField:
    from PIL import Image

    try:
        with Image.open(path) as im:
            px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot decode PNG {path}: {exc}") from exc
    return ImageField(px.astype(np.float32) / 255.0)


def _write_png(path, img: ImageField) -> None:
    from PIL import Image

    Image.fromarray(quantize(img.pixels), mode="RGB").save(path, format="PNG")


# -- dense SDF grids ---------------------------------------------------------------


def write_sdf_grid(path, grid: DenseSdfGrid) -> None:
    nx, ny, nz = grid.resolution
    header = SDF_GRID_MAGIC + struct.pack("<3I", nx, ny, nz)
    Path(path).write_bytes(header + grid.samples.astype("<f4").tobytes())


def read_sdf_grid(path) -> DenseSdfGrid:
    data = Path(path).read_bytes()
    if data[:5] != SDF_GRID_MAGIC:
        raise FormatError(f"bad SDF grid magic at byte 0: {data[:5]!r}")
    if len(data) < 17:
        raise FormatError(f"SDF grid header truncated at byte {len(data)}: expected 17 bytes")
    nx, ny, nz = struct.unpack_from("<3I", data, 5)
    expected = 4 * nx * ny * nz
    if len(data) - 17 != expected:
        raise FormatError(f"SDF grid payload at byte 17: expected {expected} bytes, got {len(data) - 17}")
    samples = np.frombuffer(data, dtype="<f4", offset=17).reshape(nz, ny, nx)
    try:
        return DenseSdfGrid(samples.astype(np.float32))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


# -- checkpoints -------------------------------------------------------------------


def encoding_to_dict(cfg: EncodingConfig) -> dict:
    d = asdict(cfg)
    d["levels"] = list(cfg.levels)
    return d


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, state: TrainState, meta: dict | None = None) -> None:
    """Serialise model, optimizer and sampler state; ``meta`` carries task/training info."""
    model = state.model
    header = {
        "encoding": encoding_to_dict(model.config),
        "output_activation": model.mlp.output_activation,
        "leaky_slope": model.mlp.leaky_slope,
    }
    header.update(meta or {})
    blob = _canonical_json(header)
    params = model.params
    out = bytearray(CHECKPOINT_MAGIC)
    out += struct.pack("<I", len(blob)) + blob
    dims = model.mlp.dims
    out += struct.pack(f"<I{len(dims)}I", len(dims), *dims)
    out += struct.pack("<I", len(params))
    for p in params:
        rows, cols = (1, p.shape[0]) if p.ndim == 1 else p.shape
        out += struct.pack("<2I", rows, cols)
    for group in (params, state.adam.m, state.adam.v):
        for arr in group:
            out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    out += struct.pack("<QQQQ", state.adam.t, state.iteration, state.rng.state, state.rng.inc)
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"checkpoint truncated reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path):
    """Inverse of ``save_checkpoint``; returns ``(TrainState, metadata dict)``."""
    data = Path(path).read_bytes()
    if data[:5] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic at byte 0: {data[:5]!r}")
    if len(data) < 9:
        raise FormatError("checkpoint truncated")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    actual = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual:
        raise FormatError(f"checkpoint CRC mismatch: stored {stored_crc:#010x}, computed {actual:#010x}")
    r = _Reader(data[:-4])
    r.pos = 5
    (blob_len,) = r.unpack("<I", "metadata length")
    try:
        meta = json.loads(r.take(blob_len, "metadata").decode("utf-8"))
        enc = meta.pop("encoding")
        config = EncodingConfig(**enc)
    except (ValueError, TypeError, KeyError) as exc:
        raise FormatError(f"invalid checkpoint metadata: {exc}") from exc
    (ndims,) = r.unpack("<I", "layer count")
    dims = list(r.unpack(f"<{ndims}I", "layer sizes"))
    (narrays,) = r.unpack("<I", "array count")
    shapes = [r.unpack("<2I", "array shape") for _ in range(narrays)]

    expected = []
    for a, b in zip(dims[:-1], dims[1:]):
        expected += [(a, b), (1, b)]
    expected += [tuple(s) for s in param_shapes(config)]
    if [tuple(s) for s in shapes] != expected:
        raise FormatError(f"array shapes {shapes} do not match the declared configuration {expected}")

    try:
        model: FieldModel = empty_model(config, dims, meta.pop("output_activation"),
                                        meta.pop("leaky_slope"))
    except (ValueError, KeyError) as exc:
        raise FormatError(f"checkpoint does not describe a valid model: {exc}") from exc
    params = model.params

    def read_group(what):
        arrays = []
        for p in params:
            raw = r.take(4 * p.size, what)
            arrays.append(np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(p.shape))
        return arrays

    values = read_group("parameters")
    for p, v in zip(params, values):
        p[...] = v
    m = read_group("Adam first moments")
    v = read_group("Adam second moments")
    t, iteration, rng_state, rng_inc = r.unpack("<QQQQ", "counters")
    if r.pos != len(r.data):
        raise FormatError(f"unexpected trailing data at byte {r.pos}")
    state = TrainState(model, AdamState(m, v, t), Rng.from_state(rng_state, rng_inc), iteration)
    return state, meta
