"""Shared containers, block partitions, medians and deterministic RNG streams.

Everything downstream (univariate/multivariate estimators, the regression and
density fitters, the Monte-Carlo harness) builds on the primitives here. All
operations are pure functions on immutable inputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when a caller violates an operation's precondition."""


class NumericFailureError(RuntimeError):
    """Raised when an iterative solver fails to converge; carries diagnostics."""


class InternalInvariantError(RuntimeError):
    """Raised when internal state violates a structural invariant."""


def _as_finite_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must contain only finite values")
    if arr is values or (isinstance(values, np.ndarray) and arr.base is values):
        arr = arr.copy()  # never freeze a caller-owned buffer
    return arr


@dataclass(frozen=True)
class ScalarSample:
    """A sample of N real observations."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_finite_array(self.values, "values")
        if arr.ndim != 1:
            raise InvalidArgumentError("ScalarSample expects a 1-D sequence")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class VectorSample:
    """A sample of N observations in R^d, one row per observation."""

    rows: np.ndarray

    def __post_init__(self):
        arr = _as_finite_array(self.rows, "rows")
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise InvalidArgumentError("VectorSample expects an N x d matrix with d >= 1")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "rows", arr)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def as_scalar_values(sample: Union[ScalarSample, Sequence[float], np.ndarray]) -> np.ndarray:
    """Coerce a ScalarSample or array-like to a validated 1-D float array."""
    if isinstance(sample, ScalarSample):
        return sample.values
    return ScalarSample(np.asarray(sample)).values


def as_vector_rows(sample: Union[VectorSample, Sequence[Sequence[float]], np.ndarray]) -> np.ndarray:
    """Coerce a VectorSample or array-like to a validated N x d float matrix."""
    if isinstance(sample, VectorSample):
        return sample.rows
    return VectorSample(np.asarray(sample)).rows


class MedianConvention(Enum):
    """Tie-breaking rule for the median of an even number of values."""

    MIDPOINT = "midpoint"
    LOWER = "lower"
    UPPER = "upper"


def median(values, convention: MedianConvention = MedianConvention.MIDPOINT) -> float:
    """Median of a nonempty sequence under the given even-length convention.

    Odd length returns the middle order statistic exactly; even length returns
    the midpoint (default), lower, or upper of the two central order statistics.
    """
    arr = _as_finite_array(values, "values")
    if arr.ndim != 1:
        arr = arr.ravel()
    n = arr.shape[0]
    srt = np.sort(arr)
    if n % 2 == 1:
        return float(srt[n // 2])
    lo, hi = srt[n // 2 - 1], srt[n // 2]
    if convention is MedianConvention.LOWER:
        return float(lo)
    if convention is MedianConvention.UPPER:
        return float(hi)
    return float((lo + hi) / 2.0)


@dataclass(frozen=True)
class BlockPartition:
    """K disjoint index blocks of equal size b = floor(N/K).

    With no shuffle seed the blocks are contiguous runs of the first K*b
    indices; with a seed the indices are shuffled deterministically first.
    Trailing N - K*b indices are dropped.
    """

    k: int
    blocks: np.ndarray  # (K, b) integer index matrix, each row sorted
    shuffle_seed: Optional[int] = None

    def __post_init__(self):
        blocks = np.array(self.blocks, dtype=np.intp, copy=True)
        if blocks.ndim != 2 or blocks.shape[0] != self.k:
            raise InternalInvariantError("block matrix shape does not match K")
        flat = blocks.ravel()
        if np.unique(flat).size != flat.size:
            raise InternalInvariantError("blocks must be pairwise disjoint")
        blocks.flags.writeable = False
        object.__setattr__(self, "blocks", blocks)

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]

    @property
    def covered(self) -> int:
        return self.k * self.blocks.shape[1]


def partition_blocks(n: int, k: int, seed: Optional[int] = None) -> BlockPartition:
    """Split {0, ..., n-1} into k blocks of size floor(n/k).

    Deterministic: contiguous runs without a seed, a seeded shuffle otherwise.
    Trailing indices beyond k*floor(n/k) are left uncovered.
    """
    if not (1 <= k <= n):
        raise InvalidArgumentError(f"need 1 <= K <= N, got K={k}, N={n}")
    b = n // k
    if seed is None:
        idx = np.arange(k * b, dtype=np.intp)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        idx = rng.permutation(n)[: k * b].astype(np.intp)
    blocks = np.sort(idx.reshape(k, b), axis=1)
    return BlockPartition(k=k, blocks=blocks, shuffle_seed=seed)


def block_means(sample, partition: BlockPartition) -> np.ndarray:
    """Per-block arithmetic means: shape (K,) for scalars, (K, d) for vectors."""
    if isinstance(sample, VectorSample):
        data = sample.rows
    elif isinstance(sample, ScalarSample):
        data = sample.values
    else:
        data = np.asarray(sample, dtype=float)
    if partition.blocks.size and partition.blocks.max() >= data.shape[0]:
        raise InternalInvariantError("partition indexes beyond the sample")
    return data[partition.blocks].mean(axis=1)


def _label_key(label: str) -> tuple:
    # Stable 64-bit label hash (two 32-bit words) for spawn keys; Python's
    # built-in hash is salted per process and cannot be used here.
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return (
        int.from_bytes(digest[:4], "little"),
        int.from_bytes(digest[4:8], "little"),
    )


def stream_seed(master_seed: int, label: str, index: int = 0) -> np.random.SeedSequence:
    """Deterministic child seed for (master seed, stream label, trial index)."""
    if index < 0:
        raise InvalidArgumentError("stream index must be nonnegative")
    return np.random.SeedSequence(master_seed, spawn_key=_label_key(label) + (index,))


@dataclass(frozen=True)
class RngContract:
    """Deterministic stream derivation: identical (seed, label, index) triples
    yield identical generators; distinct labels give independent streams."""

    master_seed: int

    def stream(self, label: str, index: int = 0) -> np.random.Generator:
        return np.random.default_rng(stream_seed(self.master_seed, label, index))
