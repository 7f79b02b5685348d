from __future__ import annotations

import math
from typing import Any, Iterable

import numpy as np
from typing_extensions import TypeAlias

from gridcast.exception import ShapeMismatchException
from gridcast.types import Matrix

SeededRng: TypeAlias = np.random.Generator

DEFAULT_INIT_RANGE = 0.08


def seeded_rng(seed: int) -> SeededRng:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(values: Any, name: str = "matrix") -> Matrix:
    m = np.array(values, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.size == 0:
        raise ShapeMismatchException(
            f"{name} must be a non-empty 2-D array, got {m.shape}"
        )
    return m


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchException(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def map_sigmoid(m: Matrix) -> Matrix:
    out = np.empty_like(m, dtype=np.float64)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def map_tanh(m: Matrix) -> Matrix:
    return np.tanh(m)


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise ShapeMismatchException(f"elementwise product of {a.shape} and {b.shape}")
    return a * b


def global_l2_norm(tensors: Iterable[Matrix]) -> float:
    return math.sqrt(
        math.fsum(math.fsum(np.square(t).ravel().tolist()) for t in tensors)
    )


def uniform_init(rows: int, cols: int, r: float, rng: SeededRng) -> Matrix:
    if r <= 0:
        raise ValueError(f"initialization range must be positive, got {r}")
    return rng.uniform(-r, r, size=(rows, cols))
