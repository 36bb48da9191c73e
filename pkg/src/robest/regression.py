"""Linear-predictor fitting under square, Huber, logistic, and hinge losses.

Provides empirical risk minimization (exact normal equations for the square
loss, full-batch gradient descent otherwise), the minmax-MOM fit driven by
median-block gradient descent-ascent, the one-hot histogram feature map, and
the covariance-weighted parameter error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import InvalidArgumentError, NumericFailureError, partition_blocks, stream_seed

_LOSS_KINDS = ("square", "huber", "logistic", "hinge")
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class LossModel:
    """One of the supported prediction losses; ``alpha`` is the Huber knee."""

    kind: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in _LOSS_KINDS:
            raise InvalidArgumentError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber" and self.alpha <= 0:
            raise InvalidArgumentError("huber alpha must be positive")

    @property
    def classification(self) -> bool:
        return self.kind in ("logistic", "hinge")

    @property
    def lipschitz(self) -> Optional[float]:
        """Lipschitz constant of c(., y); None for the (non-Lipschitz) square loss."""
        if self.kind == "huber":
            return self.alpha
        if self.kind == "logistic":
            return 1.0 / _LN2
        if self.kind == "hinge":
            return 1.0
        return None


@dataclass(frozen=True)
class FitConfig:
    """Iteration budget and step size for the gradient-based fitters.

    ``reshuffle`` re-draws the block partition every iteration of the
    minmax-MOM fit (seeded); with one fixed partition the median-block
    selection correlates with its own block's data and the dynamics settle
    visibly off the estimand.
    """

    step_size: float = 0.1
    iterations: int = 1000
    k: int = 1
    seed: Optional[int] = None
    gradient_tolerance: float = 0.0
    reshuffle: bool = True

    def __post_init__(self):
        if self.step_size <= 0:
            raise InvalidArgumentError("step_size must be positive")
        if self.iterations < 1 or self.k < 1:
            raise InvalidArgumentError("iterations and k must be >= 1")


@dataclass(frozen=True)
class RegressionDataset:
    """Feature matrix X (N x d) and target vector y (length N)."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=float, copy=True)
        y = np.array(self.targets, dtype=float, copy=True)
        if x.ndim != 2:
            raise InvalidArgumentError("features must be an N x d matrix")
        if y.shape != (x.shape[0],):
            raise InvalidArgumentError("targets length must match the feature rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("dataset entries must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class HistogramPartition:
    """Sorted breakpoints cutting a bounded interval into d one-hot cells."""

    cell_edges: np.ndarray

    def __post_init__(self):
        edges = np.array(self.cell_edges, dtype=float, copy=True)
        if edges.ndim != 1 or edges.shape[0] < 2:
            raise InvalidArgumentError("need at least two cell edges")
        if not np.all(np.diff(edges) > 0):
            raise InvalidArgumentError("cell edges must be strictly increasing")
        edges.flags.writeable = False
        object.__setattr__(self, "cell_edges", edges)

    @property
    def dim(self) -> int:
        return self.cell_edges.shape[0] - 1


def _check_target(loss: LossModel, target: float) -> None:
    if loss.classification and target not in (-1.0, 1.0):
        raise InvalidArgumentError("classification losses need targets in {-1, +1}")


def loss_value(loss: LossModel, prediction: float, target: float) -> float:
    """Loss c(prediction, target); logistic uses the base-2 logarithm."""
    _check_target(loss, float(target))
    u, y = float(prediction), float(target)
    if loss.kind == "square":
        return (y - u) ** 2
    if loss.kind == "huber":
        x = u - y
        a = loss.alpha
        return 0.5 * x * x if abs(x) <= a else a * abs(x) - 0.5 * a * a
    if loss.kind == "logistic":
        return float(np.logaddexp(0.0, -y * u) / _LN2)
    return max(0.0, 1.0 - y * u)  # hinge


def _prediction_derivative(loss: LossModel, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dc/du of c(u, y), vectorized; hinge subgradient at the kink is 0."""
    if loss.kind == "square":
        return -2.0 * (y - u)
    if loss.kind == "huber":
        return np.clip(u - y, -loss.alpha, loss.alpha)
    if loss.kind == "logistic":
        return -y / (_LN2 * (1.0 + np.exp(y * u)))
    return np.where(1.0 - y * u > 0.0, -y, 0.0)  # hinge


def loss_gradient(loss: LossModel, f, x, target: float) -> np.ndarray:
    """Gradient in f of c(f . x, target)."""
    _check_target(loss, float(target))
    f = np.asarray(f, dtype=float)
    x = np.asarray(x, dtype=float)
    if f.shape != x.shape:
        raise InvalidArgumentError("weight and feature dimensions must match")
    u = float(f @ x)
    return float(_prediction_derivative(loss, np.asarray(u), np.asarray(target))) * x


def _mean_gradient(loss: LossModel, f: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    u = x @ f
    return x.T @ _prediction_derivative(loss, u, y) / x.shape[0]


def erm_fit(dataset: RegressionDataset, loss: LossModel, config: FitConfig) -> np.ndarray:
    """Empirical risk minimizer over linear predictors.

    Square loss solves the normal equations exactly (minimum-norm solution for
    singular designs); the other losses run full-batch gradient descent for
    ``iterations`` steps or until the gradient norm falls below tolerance.
    """
    x, y = dataset.features, dataset.targets
    if loss.classification:
        bad = ~np.isin(y, (-1.0, 1.0))
        if np.any(bad):
            raise InvalidArgumentError("classification losses need targets in {-1, +1}")
    if loss.kind == "square":
        f, *_ = np.linalg.lstsq(x, y, rcond=None)
        return f
    f = np.zeros(dataset.dim)
    for _ in range(config.iterations):
        grad = _mean_gradient(loss, f, x, y)
        if not np.all(np.isfinite(grad)):
            raise NumericFailureError("non-finite gradient during ERM descent")
        if np.linalg.norm(grad) <= config.gradient_tolerance:
            break
        f = f - config.step_size * grad
        if not np.all(np.isfinite(f)):
            raise NumericFailureError("non-finite iterate during ERM descent")
    return f


def minmax_mom_fit(
    dataset: RegressionDataset,
    loss: LossModel,
    config: FitConfig,
    return_trace: bool = False,
) -> Union[np.ndarray, Tuple[np.ndarray, List[int]]]:
    """Minmax-MOM fit by median-block gradient descent-ascent.

    Maintains (f, g) from a shared zero start. Each iteration locates the
    median block of the per-block means of (loss_f - loss_g), descends f on
    that block, then relocates the median block and descends g on its own loss
    there (ascent on the difference; with a shared block the two updates would
    coincide and the pair would never separate). With ``config.reshuffle`` the
    partition is re-drawn every iteration from the seeded stream. Returns the
    average of the trailing half of the f iterates: the last iterate of a
    constant-step scheme carries a pure noise floor that the tail average
    removes. ``return_trace`` also yields the visited block indices (positions
    within the per-iteration partition when reshuffling).
    """
    x, y = dataset.features, dataset.targets
    n = dataset.n
    if config.k > n:
        raise InvalidArgumentError("need K <= N")
    if loss.classification:
        bad = ~np.isin(y, (-1.0, 1.0))
        if np.any(bad):
            raise InvalidArgumentError("classification losses need targets in {-1, +1}")
    kk = config.k
    b = n // kk
    mid = (kk - 1) // 2

    rng = np.random.default_rng(
        stream_seed(0 if config.seed is None else config.seed, "minmax-fit-blocks")
    )
    if config.reshuffle:
        # pool of seeded partitions cycled over iterations
        pool = [rng.permutation(n)[: kk * b].reshape(kk, b) for _ in range(min(128, config.iterations))]
    else:
        pool = [partition_blocks(n, kk, config.seed).blocks]

    def losses(w: np.ndarray) -> np.ndarray:
        u = x @ w
        if loss.kind == "square":
            return (y - u) ** 2
        if loss.kind == "huber":
            r = np.abs(u - y)
            a = loss.alpha
            return np.where(r <= a, 0.5 * r * r, a * r - 0.5 * a * a)
        if loss.kind == "logistic":
            return np.logaddexp(0.0, -y * u) / _LN2
        return np.maximum(0.0, 1.0 - y * u)

    f = np.zeros(dataset.dim)
    g = np.zeros(dataset.dim)
    loss_f = losses(f)
    loss_g = loss_f.copy()
    trace: List[int] = []
    eta = config.step_size
    tail_start = config.iterations // 2
    tail_sum = np.zeros(dataset.dim)
    tail_count = 0
    for it in range(config.iterations):
        blocks = pool[it % len(pool)]
        vals = (loss_f - loss_g)[blocks].mean(axis=1)
        k1 = int(np.argsort(vals, kind="stable")[mid])
        rows = blocks[k1]
        f = f - eta * _mean_gradient(loss, f, x[rows], y[rows])
        loss_f = losses(f)
        vals = (loss_f - loss_g)[blocks].mean(axis=1)
        k2 = int(np.argsort(vals, kind="stable")[mid])
        rows = blocks[k2]
        g = g - eta * _mean_gradient(loss, g, x[rows], y[rows])
        loss_g = losses(g)
        if return_trace:
            trace.extend((k1, k2))
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise NumericFailureError("non-finite iterate during minmax-MOM fit")
        if it >= tail_start:
            tail_sum += f
            tail_count += 1
    f_out = tail_sum / tail_count if tail_count else f
    if return_trace:
        return f_out, trace
    return f_out


def histogram_features(x: float, partition: HistogramPartition) -> np.ndarray:
    """One-hot cell indicator; cells are left-closed, the last is also right-closed."""
    edges = partition.cell_edges
    xf = float(x)
    if xf < edges[0] or xf > edges[-1]:
        raise InvalidArgumentError(f"x={xf} outside the partitioned range")
    idx = int(np.searchsorted(edges, xf, side="right")) - 1
    if idx == partition.dim:  # x equals the last edge
        idx -= 1
    out = np.zeros(partition.dim)
    out[idx] = 1.0
    return out


def sigma_norm_error(f_hat, f_star, covariance) -> float:
    """Covariance-weighted parameter distance sqrt((f - f*)^T Sigma (f - f*))."""
    delta = np.asarray(f_hat, dtype=float) - np.asarray(f_star, dtype=float)
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.shape != (delta.shape[0], delta.shape[0]):
        raise InvalidArgumentError("covariance shape must match the weight dimension")
    quad = float(delta @ cov @ delta)
    if quad < -1e-12:
        raise InvalidArgumentError("covariance is not positive semidefinite")
    return math.sqrt(max(quad, 0.0))
