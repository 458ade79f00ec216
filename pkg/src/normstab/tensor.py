"""Dense float64 arrays, seeded random streams and the small kernels the cells use.

Tensors are plain ``numpy.ndarray`` objects of dtype float64, row-major and
contiguous. The helpers here add the shape checks and error types the rest
of the package relies on.
"""
from __future__ import annotations

import math

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when array shapes are incompatible."""


class ParameterError(ValueError):
    """Raised when a scalar argument is outside its valid range."""


def as_tensor(data, rank=None) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=DTYPE)
    if rank is not None and arr.ndim not in np.atleast_1d(rank):
        raise DimensionError(f"expected rank {rank}, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def l2_norm(v) -> float:
    v = as_tensor(v)
    return float(math.sqrt(float(np.dot(v.ravel(), v.ravel()))))


def identity_init(n: int) -> np.ndarray:
    if n < 1:
        raise ParameterError(f"identity size must be >= 1, got {n}")
    return np.eye(n, dtype=DTYPE)


def uniform_init(rng: "Rng", shape, lo: float, hi: float) -> np.ndarray:
    if not lo < hi:
        raise ParameterError(f"uniform bounds must satisfy lo < hi, got [{lo}, {hi})")
    return rng.uniform(lo, hi, shape)


class Rng:
    """Counter-based random stream.

    Each stream is identified by ``(seed, *path)``. The Philox-4x64 key is
    derived from that identity through ``numpy.random.SeedSequence`` and every
    draw call uses a fresh counter block, so the complete state is the pair
    (identity, ``counter``). Saving and restoring a stream needs nothing more
    than those integers.
    """

    def __init__(self, seed: int, *path: int, counter: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self.counter = int(counter)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._key = seq.generate_state(2, np.uint64)

    def child(self, *path: int) -> "Rng":
        return Rng(self.seed, *self.path, *path)

    def _generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(key=self._key, counter=[0, 0, 0, self.counter])
        self.counter += 1
        return np.random.Generator(bitgen)

    def raw(self, size) -> np.ndarray:
        return self._generator().integers(0, 2**64, size=size, dtype=np.uint64, endpoint=False)

    def uniform(self, lo=0.0, hi=1.0, size=None) -> np.ndarray:
        return self._generator().uniform(lo, hi, size)

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self._generator().normal(loc, scale, size)

    def integers(self, lo, hi, size=None) -> np.ndarray:
        return self._generator().integers(lo, hi, size)

    def random(self, size=None) -> np.ndarray:
        return self._generator().random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator().permutation(n)

    def choice(self, n: int, size, replace=True) -> np.ndarray:
        return self._generator().choice(n, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path}, counter={self.counter})"
