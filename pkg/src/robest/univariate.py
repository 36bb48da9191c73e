"""Estimators of a scalar expectation with sub-Gaussian deviations under heavy tails.

All Z-estimators (Catoni, Huber, smoothed median-of-means) solve a monotone
non-increasing score by bisection. A single vectorized bisection backs both the
one-sample API and the ``*_batch`` entry points used at Monte-Carlo scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import (
    InvalidArgumentError,
    MedianConvention,
    NumericFailureError,
    as_scalar_values,
    block_means,
    median,
    partition_blocks,
)

_DEFAULT_MAX_ITERATIONS = 200


@dataclass(frozen=True)
class CatoniConfig:
    """Tuning for the Catoni Z-estimator: scale alpha, bisection tolerance, cap."""

    alpha: float
    tolerance: Optional[float] = None  # None -> 1e-10 * data range
    max_iterations: int = _DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidArgumentError("alpha must be positive")
        if self.tolerance is not None and self.tolerance <= 0:
            raise InvalidArgumentError("tolerance must be positive")


@dataclass(frozen=True)
class HuberConfig:
    """Tuning for the Huber location M-estimator: clip level c, tolerance, cap."""

    c: float
    tolerance: Optional[float] = None
    max_iterations: int = _DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidArgumentError("c must be positive")
        if self.tolerance is not None and self.tolerance <= 0:
            raise InvalidArgumentError("tolerance must be positive")


@dataclass(frozen=True)
class SmoothedMomConfig:
    """Tuning for the clamp-smoothed median-of-means Z-estimator.

    ``delta`` is an upper bound on the per-observation standard deviation.
    """

    k: int
    delta: float
    tolerance: Optional[float] = None
    max_iterations: int = _DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgumentError("K must be >= 1")
        if self.delta <= 0:
            raise InvalidArgumentError("delta must be positive")
        if self.tolerance is not None and self.tolerance <= 0:
            raise InvalidArgumentError("tolerance must be positive")


@dataclass(frozen=True)
class LepskiConfig:
    """Known variance bracket sigma^2 <= Var <= L * sigma^2 for the adaptive MOM."""

    sigma_upper: float
    big_l: float = 1.0

    def __post_init__(self):
        if self.sigma_upper <= 0:
            raise InvalidArgumentError("sigma_upper must be positive")
        if self.big_l < 1:
            raise InvalidArgumentError("L must be >= 1")


def empirical_mean(sample) -> float:
    """Arithmetic mean of the sample."""
    return float(as_scalar_values(sample).mean())


def mom_estimate(
    sample,
    k: int,
    convention: MedianConvention = MedianConvention.MIDPOINT,
    seed: Optional[int] = None,
) -> float:
    """Median of the K block means (median-of-means)."""
    values = as_scalar_values(sample)
    part = partition_blocks(values.shape[0], k, seed)
    return median(block_means(values, part), convention)


def mom_estimate_batch(
    matrix: np.ndarray,
    k: int,
    convention: MedianConvention = MedianConvention.MIDPOINT,
) -> np.ndarray:
    """Row-wise median-of-means for a (trials, N) matrix with contiguous blocks."""
    matrix = np.asarray(matrix, dtype=float)
    trials, n = matrix.shape
    if not (1 <= k <= n):
        raise InvalidArgumentError(f"need 1 <= K <= N, got K={k}, N={n}")
    b = n // k
    means = matrix[:, : k * b].reshape(trials, k, b).mean(axis=2)
    means.sort(axis=1)
    if k % 2 == 1:
        return means[:, k // 2]
    lo, hi = means[:, k // 2 - 1], means[:, k // 2]
    if convention is MedianConvention.LOWER:
        return lo
    if convention is MedianConvention.UPPER:
        return hi
    return (lo + hi) / 2.0


def catoni_influence(x: np.ndarray) -> np.ndarray:
    """Odd influence curve log(1 + x + x^2/2) for x >= 0, tightest admissible clip."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.log1p(np.abs(x) + 0.5 * x * x)


def _bisect_batch(score, lo, hi, tol, max_iterations, strict: bool = True) -> np.ndarray:
    """Vectorized bisection for row-wise non-increasing scores.

    ``score`` maps a (rows,) vector of candidate roots to the (rows,) score
    values; score(lo) >= 0 >= score(hi) is assumed. With ``strict`` the lower
    end advances while score > 0 (locating the leftmost root of a flat zero
    interval), otherwise while score >= 0 (the rightmost root). Returns bracket
    midpoints once every width is <= tol or the brackets hit float resolution.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    tol = np.asarray(tol, dtype=float)
    for _ in range(max_iterations):
        if np.all(hi - lo <= tol):
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        s = score(mid)
        advance = s > 0.0 if strict else s >= 0.0
        new_lo = np.where(advance, mid, lo)
        new_hi = np.where(advance, hi, mid)
        if np.all((new_lo == lo) & (new_hi == hi)):
            return 0.5 * (lo + hi)
        lo, hi = new_lo, new_hi
    width = float(np.max(hi - lo))
    raise NumericFailureError(
        f"bisection did not converge in {max_iterations} iterations "
        f"(max bracket width {width:.3e}, tolerance {float(np.max(tol)):.3e})"
    )


def _range_tolerance(data: np.ndarray, tolerance: Optional[float], axis=None) -> np.ndarray:
    if tolerance is not None:
        return np.asarray(tolerance, dtype=float)
    rng = data.max(axis=axis) - data.min(axis=axis)
    return 1e-10 * rng


def catoni_estimate_batch(matrix: np.ndarray, config: CatoniConfig) -> np.ndarray:
    """Row-wise Catoni estimates for a (trials, N) matrix.

    Works in the input's floating dtype (float32 input stays float32, which
    halves the memory traffic at Monte-Carlo scale). The score is evaluated
    in-place into reusable buffers; the initial bracket is a robust-scale
    window around the row medians, widened geometrically for any row whose
    endpoint signs fail, with the provable [row min, row max] as the limit
    (|psi(x)| <= |x| with matching sign makes the score >= 0 at the min and
    <= 0 at the max).
    """
    matrix = np.asarray(matrix)
    if not np.issubdtype(matrix.dtype, np.floating):
        matrix = matrix.astype(float)
    rows, _ = matrix.shape
    out = np.empty(rows, dtype=matrix.dtype)
    step = max(1, int(16_000_000 // max(matrix.shape[1], 1)))
    for start in range(0, rows, step):
        sl = slice(start, min(start + step, rows))
        out[sl] = _catoni_rows(matrix[sl], config)
    return out


def _catoni_rows(matrix: np.ndarray, config: CatoniConfig) -> np.ndarray:
    dtype = matrix.dtype
    alpha = dtype.type(config.alpha)
    z = np.empty_like(matrix)
    w = np.empty_like(matrix)

    def score(mu):
        np.subtract(matrix, mu[:, None], out=z)
        np.multiply(z, alpha, out=z)
        neg = z < 0
        np.abs(z, out=z)
        np.multiply(z, z, out=w)
        np.multiply(w, dtype.type(0.5), out=w)
        np.add(w, z, out=w)
        np.log1p(w, out=w)
        np.negative(w, out=w, where=neg)
        return w.sum(axis=1)

    med = np.median(matrix, axis=1)
    mad = np.median(np.abs(matrix - med[:, None]), axis=1)
    row_lo = matrix.min(axis=1)
    row_hi = matrix.max(axis=1)
    half = np.maximum(1.4826 * mad, 1e-30 * np.maximum(np.abs(med), 1.0)).astype(dtype)
    lo = np.maximum(med - half, row_lo)
    hi = np.minimum(med + half, row_hi)
    for _ in range(64):
        bad = (score(lo) < 0.0) | (score(hi) > 0.0)
        if not np.any(bad):
            break
        half = half * 4
        lo = np.where(bad, np.maximum(med - half, row_lo), lo)
        hi = np.where(bad, np.minimum(med + half, row_hi), hi)
        if np.all((lo == row_lo) & (hi == row_hi)):
            break
    if config.tolerance is not None:
        tol = np.asarray(config.tolerance, dtype=dtype)
    else:
        tol = (1e-10 * (row_hi - row_lo)).astype(dtype)
    return _bisect_batch(score, lo, hi, tol, config.max_iterations)


def catoni_estimate(sample, config: CatoniConfig) -> float:
    """Root of the non-increasing Catoni score sum psi(alpha (X_i - mu)) = 0."""
    values = as_scalar_values(sample)
    return float(catoni_estimate_batch(values[None, :], config)[0])


def huber_clip(x: np.ndarray, c: float) -> np.ndarray:
    """Clipped-identity score x 1{|x|<=c} + c sign(x) 1{|x|>c}."""
    return np.clip(np.asarray(x, dtype=float), -c, c)


def huber_m_estimate_batch(matrix: np.ndarray, config: HuberConfig) -> np.ndarray:
    """Row-wise Huber location estimates for a (trials, N) matrix.

    The clipped score can vanish on an interval; each row returns the midpoint
    of its leftmost and rightmost roots, both located by bisection.
    """
    matrix = np.asarray(matrix, dtype=float)
    c = config.c
    lo = matrix.min(axis=1)
    hi = matrix.max(axis=1)
    tol = _range_tolerance(matrix, config.tolerance, axis=1)

    def score(nu):
        return huber_clip(matrix - nu[:, None], c).sum(axis=1)

    left = _bisect_batch(score, lo, hi, tol, config.max_iterations, strict=True)
    right = _bisect_batch(score, lo, hi, tol, config.max_iterations, strict=False)
    return 0.5 * (left + right)


def huber_m_estimate(sample, config: HuberConfig) -> float:
    """Root of the non-increasing clipped score; flat intervals break at midpoint."""
    values = as_scalar_values(sample)
    return float(huber_m_estimate_batch(values[None, :], config)[0])


def smoothed_mom_estimate_batch(matrix: np.ndarray, config: SmoothedMomConfig) -> np.ndarray:
    """Row-wise smoothed-MOM estimates for a (trials, N) matrix."""
    matrix = np.asarray(matrix, dtype=float)
    trials, n = matrix.shape
    k = config.k
    if k > n:
        raise InvalidArgumentError(f"need K <= N, got K={k}, N={n}")
    b = n // k
    means = matrix[:, : k * b].reshape(trials, k, b).mean(axis=2)
    scale = math.sqrt(b) / config.delta

    def score(z):
        return np.clip(scale * (means - z[:, None]), -1.0, 1.0).sum(axis=1)

    half = config.delta / math.sqrt(b)
    lo = means.min(axis=1) - half
    hi = means.max(axis=1) + half
    tol = _range_tolerance(means, config.tolerance, axis=1)
    return _bisect_batch(score, lo, hi, tol, config.max_iterations)


def smoothed_mom_estimate(sample, config: SmoothedMomConfig) -> float:
    """Root of the block-clamped score sum rho(sqrt(b) (mean_k - z) / delta) = 0."""
    values = as_scalar_values(sample)
    return float(smoothed_mom_estimate_batch(values[None, :], config)[0])


def lepski_adaptive_mom(
    sample,
    config: LepskiConfig,
    convention: MedianConvention = MedianConvention.MIDPOINT,
) -> Tuple[float, int]:
    """Adaptive MOM via interval intersection over K = 1 .. floor(N/2).

    Builds intervals [MOM_K +/- 2 sigma sqrt(L K / N)] (MOM_K on the first
    K*floor(N/K) points) and returns (MOM at K_hat, K_hat) for the smallest K
    whose suffix intersection is nonempty.
    """
    values = as_scalar_values(sample)
    n = values.shape[0]
    if n < 4:
        raise InvalidArgumentError("Lepski's method needs N >= 4")
    k_max = n // 2
    centers = np.empty(k_max + 1)
    radii = np.empty(k_max + 1)
    for k in range(1, k_max + 1):
        centers[k] = mom_estimate(values, k, convention)
        radii[k] = 2.0 * config.sigma_upper * math.sqrt(config.big_l * k / n)
    # Suffix intersections: nonempty iff max lower end <= min upper end.
    lo_running, hi_running = -math.inf, math.inf
    nonempty_from = np.zeros(k_max + 1, dtype=bool)
    for k in range(k_max, 0, -1):
        lo_running = max(lo_running, centers[k] - radii[k])
        hi_running = min(hi_running, centers[k] + radii[k])
        nonempty_from[k] = lo_running <= hi_running
    for k in range(1, k_max + 1):
        if nonempty_from[k]:
            return float(centers[k]), k
    # The suffix at K = k_max is the single interval I_{k_max}: always nonempty.
    raise NumericFailureError("interval intersection unexpectedly empty at every K")


def trimmed_mean(sample, trim_fraction: float) -> float:
    """Mean after dropping the floor(f*N) smallest and largest order statistics."""
    if not (0.0 <= trim_fraction < 0.5):
        raise InvalidArgumentError("trim_fraction must lie in [0, 0.5)")
    values = as_scalar_values(sample)
    n = values.shape[0]
    m = int(trim_fraction * n)
    if 2 * m >= n:
        raise InvalidArgumentError("trimming would discard every point")
    if m == 0:
        return float(values.mean())
    srt = np.sort(values)
    return float(srt[m : n - m].mean())
