"""Density comparison tests and the finite-family selection estimator.

Works on discrete supports so every integral is an exact finite sum; the
comparison statistic is built from the bounded link x -> (x - 1) / (x + 1)
applied to square-root density ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .core import InvalidArgumentError


@dataclass(frozen=True)
class DiscreteDensity:
    """Probability masses over a shared finite support {0, ..., m-1}."""

    masses: np.ndarray

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float, copy=True)
        if masses.ndim != 1 or masses.shape[0] < 1:
            raise InvalidArgumentError("masses must be a nonempty vector")
        if np.any(masses < 0):
            raise InvalidArgumentError("masses must be nonnegative")
        if abs(masses.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("masses must sum to 1 within 1e-12")
        masses.flags.writeable = False
        object.__setattr__(self, "masses", masses)

    @property
    def support_size(self) -> int:
        return self.masses.shape[0]


@dataclass(frozen=True)
class DensityFamily:
    """A finite list of candidate densities over one common support."""

    candidates: Tuple[DiscreteDensity, ...]

    def __post_init__(self):
        cands = tuple(self.candidates)
        if not cands:
            raise InvalidArgumentError("family must be nonempty")
        m = cands[0].support_size
        if any(c.support_size != m for c in cands):
            raise InvalidArgumentError("all candidates must share one support")
        object.__setattr__(self, "candidates", cands)

    def __len__(self) -> int:
        return len(self.candidates)


def _masses(p) -> np.ndarray:
    if isinstance(p, DiscreteDensity):
        return p.masses
    return DiscreteDensity(np.asarray(p, dtype=float)).masses


def _check_support(p: np.ndarray, q: np.ndarray) -> None:
    if p.shape != q.shape:
        raise InvalidArgumentError("densities must share one support")


def hellinger_sq(p, q) -> float:
    """Squared Hellinger distance 1 - sum sqrt(p q), clamped to [0, 1]."""
    pm, qm = _masses(p), _masses(q)
    _check_support(pm, qm)
    return float(min(1.0, max(0.0, 1.0 - np.sqrt(pm * qm).sum())))


def ratio_link(x: np.ndarray) -> np.ndarray:
    """(x - 1) / (x + 1): non-decreasing [0, inf] -> [-1, 1], odd in log-ratio."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(x), 1.0, (x - 1.0) / (x + 1.0))
    return out


def _link_of_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """ratio_link(sqrt(num / den)) with the 0-mass conventions:
    den = 0 < num -> +1, num = 0 < den -> -1, both zero -> 0."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    both = (num > 0) & (den > 0)
    ratio = np.sqrt(num[both] / den[both])
    out[both] = (ratio - 1.0) / (ratio + 1.0)
    out[(num > 0) & (den == 0)] = 1.0
    out[(num == 0) & (den > 0)] = -1.0
    return out


def rho_test(f, g, sample: Sequence[int]) -> float:
    """Comparison statistic sum over observations of link(sqrt(g(z)/f(z))).

    Positive values say g explains the sample better than f; the statistic is
    antisymmetric: rho_test(f, g, s) == -rho_test(g, f, s).
    """
    fm, gm = _masses(f), _masses(g)
    _check_support(fm, gm)
    idx = np.asarray(sample, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= fm.shape[0]):
        raise InvalidArgumentError("sample indexes a point outside the support")
    per_point = _link_of_ratio(gm, fm)
    return float(per_point[idx].sum())


def rho_estimate(family: DensityFamily, sample: Sequence[int]) -> Tuple[int, DiscreteDensity]:
    """Select the candidate minimizing its worst comparison statistic.

    Evaluates all |F|^2 pairwise tests exhaustively; ties break at the lowest
    candidate index.
    """
    if not isinstance(family, DensityFamily):
        family = DensityFamily(tuple(DiscreteDensity(np.asarray(c, dtype=float)) for c in family))
    idx = np.asarray(sample, dtype=np.intp)
    m = family.candidates[0].support_size
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        raise InvalidArgumentError("sample indexes a point outside the support")
    counts = np.bincount(idx, minlength=m).astype(float)
    size = len(family)
    scores = np.empty(size)
    for i, f in enumerate(family.candidates):
        worst = -math.inf
        for g in family.candidates:
            t = float(_link_of_ratio(g.masses, f.masses) @ counts)
            worst = max(worst, t)
        scores[i] = worst
    best = int(np.argmin(scores))
    return best, family.candidates[best]


def hellinger_link_check(r, f, g) -> Tuple[float, float, float, float]:
    """Exact-summation check values for the two link/Hellinger inequalities.

    Returns (lhs1, bound1, lhs2, bound2) with
      lhs1 = sum_z r(z) link(sqrt(f(z)/g(z)))      bound1 = 4 h^2(r,g) - (3/8) h^2(r,f)
      lhs2 = sum_z r(z) link(sqrt(f(z)/g(z)))^2    bound2 = 3 sqrt(2) (h^2(r,g) + h^2(r,f))
    """
    rm, fm, gm = _masses(r), _masses(f), _masses(g)
    _check_support(rm, fm)
    _check_support(rm, gm)
    link = _link_of_ratio(fm, gm)
    lhs1 = float(rm @ link)
    lhs2 = float(rm @ link**2)
    h2_rg = hellinger_sq(rm, gm)
    h2_rf = hellinger_sq(rm, fm)
    bound1 = 4.0 * h2_rg - 0.375 * h2_rf
    bound2 = 3.0 * math.sqrt(2.0) * (h2_rg + h2_rf)
    return lhs1, bound1, lhs2, bound2
