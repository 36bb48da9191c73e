"""Seeded generators for clean heavy-tailed data and contamination models.

Every generator records the analytic truth (mean, covariance, weights) next to
the sample so the harness can measure estimator error exactly. Identical
(spec, N, seed) triples produce bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple, Union

import numpy as np

from .core import (
    InvalidArgumentError,
    ScalarSample,
    VectorSample,
    stream_seed,
)

_DISTRIBUTION_KINDS = (
    "gaussian",
    "student_t",
    "pareto",
    "lognormal",
    "laplace",
    "poisson",
    "three_point",
    "point_mass",
)

_ADVERSARIAL_STRATEGIES = ("far_constant", "mirror", "cluster_at_offset")


@dataclass(frozen=True)
class DistributionSpec:
    """Recipe for a clean sampling distribution; parameters depend on ``kind``.

    gaussian:    mu, sigma (or covariance: full d x d matrix)
    student_t:   dof, scale (infinite variance flagged when dof <= 2)
    pareto:      shape, scale, centered
    lognormal:   mu, sigma, centered
    laplace:     location (unit scale density 0.5 exp(-|x - location|))
    poisson:     theta
    three_point: sigma, t, n  (values {-n*t, 0, +n*t})
    point_mass:  value
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _DISTRIBUTION_KINDS:
            raise InvalidArgumentError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        p = self.params
        if self.kind == "gaussian":
            if p.get("covariance") is None and float(p.get("sigma", 1.0)) < 0:
                raise InvalidArgumentError("gaussian sigma must be >= 0")
        elif self.kind == "student_t":
            if float(p.get("dof", 3.0)) <= 1:
                raise InvalidArgumentError("student_t dof must exceed 1 (finite mean)")
            if float(p.get("scale", 1.0)) <= 0:
                raise InvalidArgumentError("student_t scale must be positive")
        elif self.kind == "pareto":
            if float(p.get("shape", 3.0)) <= 1:
                raise InvalidArgumentError("pareto shape must exceed 1 (finite mean)")
            if float(p.get("scale", 1.0)) <= 0:
                raise InvalidArgumentError("pareto scale must be positive")
        elif self.kind == "lognormal":
            if float(p.get("sigma", 1.0)) <= 0:
                raise InvalidArgumentError("lognormal sigma must be positive")
        elif self.kind == "poisson":
            if float(p.get("theta", 1.0)) <= 0:
                raise InvalidArgumentError("poisson theta must be positive")
        elif self.kind == "three_point":
            sigma = float(p.get("sigma", 1.0))
            t = float(p.get("t", 1.0))
            n = int(p.get("n", 1))
            if sigma <= 0 or t <= 0 or n < 1:
                raise InvalidArgumentError("three_point needs sigma > 0, t > 0, n >= 1")
            if sigma**2 / (n**2 * t**2) > 1.0:
                raise InvalidArgumentError("three_point requires sigma^2/(n^2 t^2) <= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @staticmethod
    def from_dict(data: Mapping[str, object]) -> "DistributionSpec":
        data = dict(data)
        kind = data.pop("kind")
        return DistributionSpec(kind=kind, params=data)


@dataclass(frozen=True)
class ContaminationSpec:
    """Recipe for corrupting a clean sample.

    kind "none"         leaves the sample untouched;
    kind "huber"        replaces each point independently with probability
                        epsilon by a draw from ``outlier``;
    kind "adversarial"  replaces exactly ``count`` seeded rows per ``strategy``
                        (far_constant / mirror / cluster_at_offset), which may
                        read the full clean sample.
    """

    kind: str = "none"
    epsilon: float = 0.0
    outlier: Optional[DistributionSpec] = None
    count: int = 0
    strategy: Optional[str] = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("none", "huber", "adversarial"):
            raise InvalidArgumentError(f"unknown contamination kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        if self.kind == "huber":
            # epsilon = 1 allowed: the degenerate all-outlier mixture.
            if not (0.0 <= self.epsilon <= 1.0):
                raise InvalidArgumentError("epsilon must lie in [0, 1]")
            if self.outlier is None:
                raise InvalidArgumentError("huber contamination needs an outlier spec")
        if self.kind == "adversarial":
            if self.count < 0:
                raise InvalidArgumentError("count must be nonnegative")
            if self.strategy not in _ADVERSARIAL_STRATEGIES:
                raise InvalidArgumentError(f"unknown adversarial strategy {self.strategy!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "huber":
            out["epsilon"] = self.epsilon
            out["outlier"] = self.outlier.to_dict()
        elif self.kind == "adversarial":
            out["count"] = self.count
            out["strategy"] = self.strategy
            out.update(self.params)
        return out

    @staticmethod
    def from_dict(data: Mapping[str, object]) -> "ContaminationSpec":
        data = dict(data)
        kind = data.pop("kind", "none")
        if kind == "none":
            return ContaminationSpec()
        if kind == "huber":
            return ContaminationSpec(
                kind="huber",
                epsilon=float(data.pop("epsilon")),
                outlier=DistributionSpec.from_dict(data.pop("outlier")),
            )
        return ContaminationSpec(
            kind="adversarial",
            count=int(data.pop("count")),
            strategy=data.pop("strategy"),
            params=data,
        )


@dataclass(frozen=True)
class TruthRecord:
    """Analytic ground truth recorded alongside a generated sample."""

    true_mean: Union[float, np.ndarray]
    true_covariance: Optional[np.ndarray] = None
    true_weights: Optional[np.ndarray] = None
    outlier_indices: Tuple[int, ...] = ()
    infinite_variance: bool = False

    @property
    def true_variance(self) -> Optional[float]:
        """Scalar variance when defined: the (single) diagonal entry in d=1."""
        if self.true_covariance is None or self.infinite_variance:
            return None
        cov = np.atleast_2d(self.true_covariance)
        if cov.shape == (1, 1):
            return float(cov[0, 0])
        return None

    def operator_norm(self) -> Optional[float]:
        if self.true_covariance is None or self.infinite_variance:
            return None
        cov = np.atleast_2d(self.true_covariance)
        return float(np.linalg.eigvalsh(cov)[-1])


def _draw_matrix(spec: DistributionSpec, n: int, d: int, rng: np.random.Generator):
    """(n, d) draw matrix plus (mean vector, covariance, infinite-variance flag)."""
    p = spec.params
    kind = spec.kind
    if kind == "gaussian":
        cov = p.get("covariance")
        mu = np.broadcast_to(np.atleast_1d(np.asarray(p.get("mu", 0.0), dtype=float)), (d,))
        if cov is not None:
            cov = np.asarray(cov, dtype=float)
            if cov.shape != (d, d):
                raise InvalidArgumentError("covariance shape must be (d, d)")
            data = rng.multivariate_normal(mu, cov, size=n, method="eigh")
        else:
            sigma = float(p.get("sigma", 1.0))
            data = mu + sigma * rng.standard_normal((n, d))
            cov = sigma**2 * np.eye(d)
        return data, mu.astype(float), cov, False
    if kind == "student_t":
        dof = float(p.get("dof", 3.0))
        scale = float(p.get("scale", 1.0))
        data = scale * rng.standard_t(dof, size=(n, d))
        infinite = dof <= 2
        var = scale**2 * dof / (dof - 2) if not infinite else math.nan
        return data, np.zeros(d), (var * np.eye(d) if not infinite else None), infinite
    if kind == "pareto":
        shape = float(p.get("shape", 3.0))
        scale = float(p.get("scale", 1.0))
        centered = bool(p.get("centered", True))
        data = scale * (1.0 + rng.pareto(shape, size=(n, d)))
        mean = shape * scale / (shape - 1.0)
        infinite = shape <= 2
        var = scale**2 * shape / ((shape - 1) ** 2 * (shape - 2)) if not infinite else math.nan
        if centered:
            data = data - mean
            mean_vec = np.zeros(d)
        else:
            mean_vec = np.full(d, mean)
        return data, mean_vec, (var * np.eye(d) if not infinite else None), infinite
    if kind == "lognormal":
        mu = float(p.get("mu", 0.0))
        sigma = float(p.get("sigma", 1.0))
        centered = bool(p.get("centered", True))
        data = rng.lognormal(mu, sigma, size=(n, d))
        mean = math.exp(mu + sigma**2 / 2)
        var = (math.exp(sigma**2) - 1.0) * math.exp(2 * mu + sigma**2)
        if centered:
            data = data - mean
            mean_vec = np.zeros(d)
        else:
            mean_vec = np.full(d, mean)
        return data, mean_vec, var * np.eye(d), False
    if kind == "laplace":
        loc = float(p.get("location", 0.0))
        data = rng.laplace(loc, 1.0, size=(n, d))
        return data, np.full(d, loc), 2.0 * np.eye(d), False
    if kind == "poisson":
        theta = float(p.get("theta", 1.0))
        data = rng.poisson(theta, size=(n, d)).astype(float)
        return data, np.full(d, theta), theta * np.eye(d), False
    if kind == "three_point":
        sigma = float(p.get("sigma", 1.0))
        t = float(p.get("t", 1.0))
        n_param = int(p.get("n", 1))
        spike = n_param * t
        prob = sigma**2 / (2.0 * n_param**2 * t**2)
        u = rng.random((n, d))
        data = np.where(u < prob, spike, np.where(u > 1.0 - prob, -spike, 0.0))
        return data, np.zeros(d), sigma**2 * np.eye(d), False
    if kind == "point_mass":
        value = float(p.get("value", 0.0))
        return np.full((n, d), value), np.full(d, value), np.zeros((d, d)), False
    raise InvalidArgumentError(f"unknown distribution kind {kind!r}")


def sample_clean(
    spec: DistributionSpec, n: int, d: int = 1, seed: Optional[int] = None
):
    """Draw N observations and record the analytic truth.

    Returns (ScalarSample, TruthRecord) for d == 1 and (VectorSample,
    TruthRecord) for d > 1. Coordinates are i.i.d. except for gaussian with an
    explicit covariance matrix.
    """
    if n < 1 or d < 1:
        raise InvalidArgumentError("need N >= 1 and d >= 1")
    rng = np.random.default_rng(stream_seed(0 if seed is None else seed, "sample-clean"))
    data, mean_vec, cov, infinite = _draw_matrix(spec, n, d, rng)
    truth = TruthRecord(
        true_mean=float(mean_vec[0]) if d == 1 else mean_vec,
        true_covariance=cov,
        infinite_variance=infinite,
    )
    if d == 1:
        return ScalarSample(data[:, 0]), truth
    return VectorSample(data), truth


def _direction_vector(params: Mapping[str, object], d: int) -> np.ndarray:
    direction = params.get("direction")
    if direction is None:
        vec = np.zeros(d)
        vec[0] = 1.0
        return vec
    vec = np.asarray(direction, dtype=float)
    if vec.shape != (d,):
        raise InvalidArgumentError("direction must have the sample's dimension")
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise InvalidArgumentError("direction must be nonzero")
    return vec / norm


def contaminate(sample, truth: TruthRecord, spec: ContaminationSpec, seed: Optional[int] = None):
    """Apply the contamination recipe; returns (sample, truth) with updated
    outlier indices. The clean inputs are never mutated."""
    if spec.kind == "none":
        return sample, truth

    scalar = isinstance(sample, ScalarSample)
    data = sample.values.copy() if scalar else sample.rows.copy()
    if not scalar and data.ndim == 1:
        data = data[:, None]
    n = data.shape[0]
    d = 1 if scalar else data.shape[1]
    rng = np.random.default_rng(stream_seed(0 if seed is None else seed, "contaminate"))

    if spec.kind == "huber":
        mask = rng.random(n) < spec.epsilon
        count = int(mask.sum())
        if count:
            out_draw, _, _, _ = _draw_matrix(spec.outlier, count, d, rng)
            if scalar:
                data[mask] = out_draw[:, 0]
            else:
                data[mask] = out_draw
        indices = tuple(int(i) for i in np.flatnonzero(mask))
    else:
        if spec.count > n:
            raise InvalidArgumentError("cannot corrupt more rows than the sample holds")
        chosen = np.sort(rng.choice(n, size=spec.count, replace=False))
        params = spec.params
        if spec.strategy == "far_constant":
            magnitude = float(params.get("magnitude", 1e6))
            row = magnitude * _direction_vector(params, d)
            data[chosen] = row[0] if scalar else row
        elif spec.strategy == "mirror":
            scale = float(params.get("scale", 1.0))
            center = data.mean(axis=0)
            data[chosen] = center - scale * (data[chosen] - center)
        else:  # cluster_at_offset
            offset = np.asarray(params.get("offset", np.zeros(d)), dtype=float)
            if offset.shape == ():
                offset = np.full(d, float(offset))
            if offset.shape != (d,):
                raise InvalidArgumentError("offset must have the sample's dimension")
            center = data.mean(axis=0)
            data[chosen] = (center + offset)[0] if scalar else center + offset
        indices = tuple(int(i) for i in chosen)

    new_truth = replace(truth, outlier_indices=indices)
    if scalar:
        return ScalarSample(data if data.ndim == 1 else data[:, 0]), new_truth
    return VectorSample(data), new_truth


def regression_instance(
    design,
    f_star,
    noise: DistributionSpec,
    n: int,
    seed: Optional[int] = None,
    design_dof: float = 4.0,
):
    """Draw a linear-model dataset y = X f* + xi with analytic design covariance.

    ``design`` is "gaussian", "student_t", or a HistogramPartition (its one-hot
    features have second-moment matrix I/d).
    """
    from .regression import HistogramPartition, RegressionDataset, histogram_features

    f_star = np.asarray(f_star, dtype=float)
    d = f_star.shape[0]
    rng = np.random.default_rng(stream_seed(0 if seed is None else seed, "regression-design"))
    if isinstance(design, HistogramPartition):
        if design.dim != d:
            raise InvalidArgumentError("f_star length must match the partition cells")
        lo, hi = design.cell_edges[0], design.cell_edges[-1]
        raw = rng.uniform(lo, hi, size=n)
        x = np.vstack([histogram_features(v, design) for v in raw])
        sigma_design = np.eye(d) / d
    elif design == "gaussian":
        x = rng.standard_normal((n, d))
        sigma_design = np.eye(d)
    elif design == "student_t":
        if design_dof <= 2:
            raise InvalidArgumentError("student_t design needs dof > 2 for a finite covariance")
        x = rng.standard_t(design_dof, size=(n, d))
        sigma_design = (design_dof / (design_dof - 2)) * np.eye(d)
    else:
        raise InvalidArgumentError(f"unknown design {design!r}")

    noise_rng = np.random.default_rng(stream_seed(0 if seed is None else seed, "regression-noise"))
    xi, noise_mean, _, infinite = _draw_matrix(noise, n, 1, noise_rng)
    y = x @ f_star + xi[:, 0]
    truth = TruthRecord(
        true_mean=float(noise_mean[0]),
        true_covariance=sigma_design,
        true_weights=f_star,
        infinite_variance=infinite,
    )
    return RegressionDataset(features=x, targets=y), truth
