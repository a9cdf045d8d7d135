"""Numeric substrate: matrix helpers, the PCG32 generator and a gradient checker.

Matrices are plain 2-D numpy arrays in row-major (C) order with one sample per
row. Training uses float32; gradient checks run in float64.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError, NumericError

MASK64 = 0xFFFF_FFFF_FFFF_FFFF
MASK32 = 0xFFFF_FFFF
PCG_MULT = 6364136223846793005

_BLOCK = 1 << 16


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ConfigError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def _xsh_rr(old):
    xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)) & np.uint64(MASK32)
    rot = old >> np.uint64(59)
    left = (xorshifted << ((np.uint64(32) - rot) & np.uint64(31))) & np.uint64(MASK32)
    return (xorshifted >> rot) | left


class Rng:
    """PCG-XSH-RR 32-bit generator (O'Neill's ``pcg32``).

    The scalar path and the vectorised block path produce the same stream:
    ``rng.next_u32_array(k)`` equals ``k`` successive ``rng.next_u32()`` calls.
    """

    _jump_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= seed <= MASK64:
            raise ConfigError(f"seed must fit in 64 bits, got {seed}")
        self.inc = ((stream << 1) & MASK64) | 1
        self.state = 0
        self.next_u32()
        self.state = (self.state + seed) & MASK64
        self.next_u32()

    @classmethod
    def from_state(cls, state: int, inc: int) -> "Rng":
        rng = cls.__new__(cls)
        rng.state = state & MASK64
        rng.inc = inc | 1
        return rng

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * PCG_MULT + self.inc) & MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & MASK32

    def _jump_tables(self) -> tuple[np.ndarray, np.ndarray]:
        # mult[j], add[j] map state s to the state j steps later: mult*s + add.
        tables = self._jump_cache.get(self.inc)
        if tables is None:
            mult = np.ones(1, dtype=np.uint64)
            add = np.zeros(1, dtype=np.uint64)
            step_mult, step_add = PCG_MULT, self.inc
            while mult.size <= _BLOCK:
                m = mult.size
                # m steps from the last table entry; python ints avoid overflow warnings
                mm = (int(mult[-1]) * step_mult) & MASK64
                ma = (int(add[-1]) * step_mult + step_add) & MASK64
                mult = np.concatenate([mult, mult * np.uint64(mm)])
                add = np.concatenate([add, mult[:m] * np.uint64(ma) + add])
            tables = (mult, add)
            self._jump_cache[self.inc] = tables
        return tables

    def next_u32_array(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        mult, add = self._jump_tables()
        pos = 0
        while pos < count:
            k = min(_BLOCK, count - pos)
            s = np.uint64(self.state)
            states = mult[:k] * s + add[:k]
            out[pos:pos + k] = _xsh_rr(states)
            self.state = (int(mult[k]) * self.state + int(add[k])) & MASK64
            pos += k
        return out

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """One draw from [lo, hi)."""
        if not lo < hi:
            raise ConfigError(f"uniform requires lo < hi, got ({lo}, {hi})")
        value = lo + (hi - lo) * (self.next_u32() * 2.0**-32)
        return value if value < hi else float(np.nextafter(hi, lo))

    def uniform_array(self, lo: float, hi: float, size) -> np.ndarray:
        if not lo < hi:
            raise ConfigError(f"uniform requires lo < hi, got ({lo}, {hi})")
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        frac = self.next_u32_array(n).astype(np.float64) * 2.0**-32
        values = lo + (hi - lo) * frac
        np.minimum(values, np.nextafter(hi, lo), out=values)
        return values.reshape(shape)

    def integers(self, n: int, size: int) -> np.ndarray:
        """``size`` integers in [0, n) by 32-bit multiply-shift reduction."""
        if not 1 <= n <= MASK32:
            raise ConfigError(f"integer range must be in [1, 2^32), got {n}")
        u = self.next_u32_array(size)
        return ((u * np.uint64(n)) >> np.uint64(32)).astype(np.int64)

    def normal_array(self, size) -> np.ndarray:
        """Standard normal samples by the Box-Muller transform."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        half = (n + 1) // 2
        u = self.next_u32_array(2 * half).astype(np.float64) * 2.0**-32
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:half]))
        theta = 2.0 * np.pi * u[half:]
        z = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])
        return z[:n].reshape(shape)


def check_gradient(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Compare the analytic gradient of ``f`` with central differences.

    ``f`` maps a parameter vector to ``(value, gradient)``. Everything runs in
    float64. Returns ``max_i |g_i - fd_i| / max(1, |fd_i|)``.
    """
    x = np.array(x, dtype=np.float64).ravel()
    value, grad = f(x.copy())
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericError("non-finite value or gradient at the check point")
    if grad.shape != x.shape:
        raise ConfigError(f"gradient shape {grad.shape} does not match parameters {x.shape}")
    worst = 0.0
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fp = f(xp)[0]
        fm = f(xm)[0]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value around parameter {i}")
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    return worst
