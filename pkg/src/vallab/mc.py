"""Deterministic chunked Monte Carlo on counter-based random streams.

Every sample budget is cut into fixed-size chunks.  Chunk ``i`` draws from a
Philox generator keyed by ``(seed, *stream, i)``, so the result of a run does
not depend on how many workers process the chunks.  Chunk statistics are
merged in chunk order with the pairwise (Chan) mean/variance update.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

Kernel = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class MCConfig:
    """Sample budget, seed and stream path for one Monte Carlo computation."""

    samples: int = 1_000_000
    seed: int = 0
    stream: tuple[int, ...] = ()
    chunk: int = 1 << 16
    workers: int = 1

    def __post_init__(self):
        if self.samples <= 0:
            raise ValueError(f"sample budget must be positive, got {self.samples}")
        if self.chunk <= 0:
            raise ValueError("chunk size must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def child(self, *keys: int) -> "MCConfig":
        """Independent sub-stream; children with distinct keys never overlap."""
        return replace(self, stream=self.stream + tuple(int(k) for k in keys))

    def with_samples(self, samples: int) -> "MCConfig":
        return replace(self, samples=int(samples))

    def generator(self, chunk_index: int = 0) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream + (int(chunk_index),))
        return np.random.Generator(np.random.Philox(seq))

    def chunk_sizes(self) -> list[int]:
        full, rest = divmod(self.samples, self.chunk)
        return [self.chunk] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class MCEstimate:
    """A scalar answer with its standard error.

    Deterministic computations carry ``stderr == 0`` and ``samples == 0``.
    """

    mean: float
    stderr: float = 0.0
    samples: int = 0
    seed: int | None = None

    @classmethod
    def exact(cls, value: float) -> "MCEstimate":
        return cls(float(value), 0.0, 0, None)

    def __float__(self) -> float:
        return float(self.mean)

    def __add__(self, other):
        if isinstance(other, MCEstimate):
            return MCEstimate(self.mean + other.mean, math.hypot(self.stderr, other.stderr),
                              self.samples + other.samples, self.seed)
        return MCEstimate(self.mean + float(other), self.stderr, self.samples, self.seed)

    __radd__ = __add__

    def __neg__(self):
        return MCEstimate(-self.mean, self.stderr, self.samples, self.seed)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c: float):
        c = float(c)
        return MCEstimate(c * self.mean, abs(c) * self.stderr, self.samples, self.seed)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return self * (1.0 / float(c))

    def zscore(self, target: "MCEstimate | float") -> float:
        """|self - target| in units of the combined standard error."""
        other = target if isinstance(target, MCEstimate) else MCEstimate.exact(target)
        se = math.hypot(self.stderr, other.stderr)
        diff = abs(self.mean - other.mean)
        if se == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return diff / se

    def agrees(self, target: "MCEstimate | float", sigmas: float = 3.0, atol: float = 0.0) -> bool:
        other = target if isinstance(target, MCEstimate) else MCEstimate.exact(target)
        se = math.hypot(self.stderr, other.stderr)
        return abs(self.mean - other.mean) <= sigmas * se + atol

    def to_dict(self) -> dict:
        return {"value": self.mean, "stderr": self.stderr, "samples": self.samples, "seed": self.seed}


@dataclass
class _Moments:
    count: int
    mean: np.ndarray
    m2: np.ndarray

    def merge(self, other: "_Moments") -> "_Moments":
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return _Moments(n, mean, m2)


@dataclass(frozen=True)
class VectorEstimate:
    """Component-wise mean and standard error of a vector-valued sample average."""

    mean: np.ndarray
    stderr: np.ndarray
    samples: int
    seed: int | None = None

    def __getitem__(self, i) -> MCEstimate:
        return MCEstimate(float(self.mean[i]), float(self.stderr[i]), self.samples, self.seed)

    def __len__(self):
        return len(self.mean)


def _chunk_moments(args) -> _Moments:
    kernel, mc, index, size = args
    values = np.asarray(kernel(mc.generator(index), size), dtype=float)
    if values.shape[0] != size:
        raise ValueError(f"kernel returned {values.shape[0]} values for {size} samples")
    mean = values.mean(axis=0)
    m2 = ((values - mean) ** 2).sum(axis=0)
    return _Moments(size, mean, m2)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def sample_mean(kernel: Kernel, mc: MCConfig) -> VectorEstimate:
    """Average ``kernel`` over ``mc.samples`` draws.

    ``kernel(rng, size)`` returns per-sample values of shape ``(size,)`` or
    ``(size, k)``.  It must be picklable when ``mc.workers > 1``.
    """
    tasks = [(kernel, mc, i, s) for i, s in enumerate(mc.chunk_sizes())]
    if mc.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(mc.workers, len(tasks))) as pool:
            parts = list(pool.map(_chunk_moments, tasks))
    else:
        parts = [_chunk_moments(t) for t in tasks]
    total = _Moments(0, np.zeros(()), np.zeros(()))
    for part in parts:
        total = total.merge(part)
    n = total.count
    var = total.m2 / (n - 1) if n > 1 else np.full_like(total.m2, np.inf)
    stderr = np.sqrt(var / n)
    return VectorEstimate(np.atleast_1d(total.mean), np.atleast_1d(stderr), n, mc.seed)


def estimate(kernel: Kernel, mc: MCConfig) -> MCEstimate:
    """Scalar version of :func:`sample_mean`."""
    vec = sample_mean(kernel, mc)
    if len(vec) != 1:
        raise ValueError("kernel is vector valued; use sample_mean")
    return vec[0]
