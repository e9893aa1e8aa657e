"""Dense float64 helpers and the counter-based random stream.

Matrices are plain 2-D ``numpy.float64`` arrays. The helpers here add the
shape and finiteness checks the rest of the package relies on; none of them
mutate their inputs.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, NumericError


def as_matrix(a) -> np.ndarray:
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ConfigurationError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def check_finite(a: np.ndarray, context: str = "") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        where = f" ({context})" if context else ""
        raise NumericError(f"non-finite value encountered{where}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def elementwise(a: np.ndarray, f, context: str = "") -> np.ndarray:
    """Apply a vectorized scalar map ``f`` and reject non-finite results."""
    with np.errstate(all="ignore"):
        out = np.asarray(f(a), dtype=np.float64)
    if out.shape != a.shape:
        raise ConfigurationError("elementwise map changed the shape")
    return check_finite(out, context)


def square(a):
    return elementwise(a, np.square)


def relu(a):
    return elementwise(a, lambda x: np.maximum(x, 0.0))


def tanh(a):
    return elementwise(a, np.tanh)


class RngStream:
    """Deterministic stream keyed by ``seed`` (Philox, counter based).

    ``child(*keys)`` gives an independent stream whose output depends only on
    ``(seed, keys)``, so sweep trials can run in any order.
    """

    def __init__(self, seed: int, _keys: tuple[int, ...] = ()):
        if seed < 0:
            raise ConfigurationError("seed must be non-negative")
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in _keys)
        ss = np.random.SeedSequence([self.seed, *self.keys])
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.keys + tuple(keys))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
        return rng_normal(self, rows, cols, std)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def rng_normal(stream: RngStream, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
    if std <= 0:
        raise ConfigurationError("std must be positive")
    return stream.generator.standard_normal((rows, cols)) * std


def glorot_init(fan_in: int, fan_out: int, stream: RngStream, shape=None) -> np.ndarray:
    """Uniform Glorot initialization, bound sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ConfigurationError("fan_in and fan_out must be >= 1")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return stream.uniform(-bound, bound, shape or (fan_in, fan_out))
