"""Estimators of a d-dimensional expectation.

Baselines (coordinatewise MOM, geometric-MOM initialization), the minmax-MOM
family (grid oracle and gradient descent-ascent solver), approximate Tukey
depth/median, the PAC-Bayes direction estimator, and the trimmed-spectral
descent algorithm for robust mean estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    InvalidArgumentError,
    MedianConvention,
    RngContract,
    as_vector_rows,
    block_means,
    median,
    partition_blocks,
)
from .univariate import empirical_mean


@dataclass(frozen=True)
class DescentConfig:
    """Tuning for the trimmed-spectral descent mean estimator.

    max_steps defaults to ceil(log(144 K) / log(4/3)). A positive
    stall_tolerance stops the iteration once the trimmed objective fails to
    improve by that relative amount; zero runs the full step budget.
    """

    k: int
    trim_alpha: float = 0.1
    inner_rounds: int = 8
    power_iterations: int = 32
    max_steps: Optional[int] = None
    stall_tolerance: float = 1e-3
    seed: Optional[int] = None

    def __post_init__(self):
        if not (0.0 < self.trim_alpha < 1.0 / 3.0):
            raise InvalidArgumentError("trim_alpha must lie in (0, 1/3)")
        if min(self.k, self.inner_rounds, self.power_iterations) < 1:
            raise InvalidArgumentError("k, inner_rounds, power_iterations must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise InvalidArgumentError("max_steps must be >= 1")

    @property
    def steps(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return max(1, math.ceil(math.log(144.0 * self.k) / math.log(4.0 / 3.0)))


@dataclass(frozen=True)
class DirectionResult:
    """Outcome of the trimmed direction search around a center point."""

    direction: np.ndarray  # unit vector
    objective: float  # trimmed quadratic-form value along `direction`
    active_blocks: Tuple[int, ...]  # retained (1 - alpha) K block indices
    degenerate: bool = False  # every retained block mean equals the center
    objective_trace: Tuple[float, ...] = ()  # objective after each accepted round


@dataclass(frozen=True)
class PacBayesConfig:
    """Tuning for the Gaussian-smoothed direction estimator and its minmax mean."""

    lam: float
    beta: float
    direction_count: int = 64
    quadrature_nodes: int = 40
    seed: Optional[int] = None

    def __post_init__(self):
        if self.lam <= 0 or self.beta <= 0:
            raise InvalidArgumentError("lambda and beta must be positive")
        if self.direction_count < 1 or self.quadrature_nodes < 1:
            raise InvalidArgumentError("direction_count and quadrature_nodes must be >= 1")


@dataclass(frozen=True)
class GdaConfig:
    """Tuning for the gradient descent-ascent minmax-MOM mean solver."""

    step_size: float
    iterations: int
    k: int
    seed: Optional[int] = None

    def __post_init__(self):
        if self.step_size <= 0:
            raise InvalidArgumentError("step_size must be positive")
        if self.iterations < 1 or self.k < 1:
            raise InvalidArgumentError("iterations and k must be >= 1")


def coordinatewise_mom(
    sample,
    k: int,
    convention: MedianConvention = MedianConvention.MIDPOINT,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Per-coordinate median of the K block means, with shared blocks."""
    rows = as_vector_rows(sample)
    part = partition_blocks(rows.shape[0], k, seed)
    means = block_means(rows, part)
    return np.array([median(means[:, j], convention) for j in range(means.shape[1])])


def geometric_mom_init(
    sample,
    k: int,
    convention: MedianConvention = MedianConvention.MIDPOINT,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Block mean with the smallest median distance to all K block means."""
    rows = as_vector_rows(sample)
    part = partition_blocks(rows.shape[0], k, seed)
    means = block_means(rows, part)
    return _geometric_median_of_means(means, convention)


def _geometric_median_of_means(means: np.ndarray, convention: MedianConvention) -> np.ndarray:
    diffs = means[:, None, :] - means[None, :, :]
    dists = np.linalg.norm(diffs, axis=2)  # (K, K), zero diagonal included
    scores = np.array([median(dists[i], convention) for i in range(dists.shape[0])])
    return means[int(np.argmin(scores))].copy()


def _top_eigenvector(matrix: np.ndarray, start: np.ndarray, iterations: int) -> np.ndarray:
    v = start / np.linalg.norm(start)
    for _ in range(iterations):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v
        v = w / norm
    return v


def _tangent_polish(objective, v: np.ndarray, best: float, angle_tolerance: float,
                    max_evaluations: int = 20_000):
    """Pattern search over the unit sphere with shrinking angular steps.

    The trimmed objective is piecewise quadratic with concave corners where
    the retained set switches; eigenvector fixed points cannot sit on those
    corners, so a derivative-free polish is needed to attain them.
    """
    d = v.size
    step = 0.25
    evaluations = 0
    while step > angle_tolerance and evaluations < max_evaluations:
        # orthonormal tangent basis at v
        basis = np.linalg.qr(np.column_stack([v, np.eye(d)]))[0][:, 1:d]
        improved = False
        for t in basis.T:
            for sign in (1.0, -1.0):
                w = math.cos(step) * v + math.sin(step) * sign * t
                scores_mean = objective(w)
                evaluations += 1
                if scores_mean > best:
                    v, best = w, scores_mean
                    improved = True
                    break
            if improved:
                break
        if not improved:
            step *= 0.5
    return v, best


def trimmed_direction(
    x,
    blk_means: Sequence[Sequence[float]],
    trim_alpha: float,
    rounds: int = 8,
    power_iterations: int = 32,
    seed: Optional[int] = None,
    initial_direction: Optional[Sequence[float]] = None,
    restarts: int = 1,
    polish_angle_tolerance: Optional[float] = None,
) -> DirectionResult:
    """Alternating weight/eigenvector search for the trimmed top direction.

    Retains the ceil((1-alpha)K) blocks with smallest squared projection onto
    the current direction, then moves the direction to the top eigenvector of
    the retained blocks' uniform-weight second-moment matrix. An eigen-step is
    accepted only if it does not decrease the trimmed objective, so the
    objective is non-decreasing across rounds and the result is a fixed point.

    ``restarts`` > 1 repeats the alternation from extra seeded starts (the
    untrimmed top eigenvector plus fresh random unit vectors) and keeps the
    best result; the alternation alone can stall in a sub-optimal basin.
    ``polish_angle_tolerance`` enables a pattern-search refinement down to
    that angular resolution after each restart; the trimmed objective's
    maximum often sits on an active-set switching corner that eigenvector
    steps cannot attain.
    """
    x = np.asarray(x, dtype=float)
    means = np.asarray(blk_means, dtype=float)
    if means.ndim != 2:
        raise InvalidArgumentError("block means must form a K x d matrix")
    k, d = means.shape
    if k < 2:
        raise InvalidArgumentError("need at least two block means")
    if not (0.0 < trim_alpha < 1.0 / 3.0):
        raise InvalidArgumentError("trim_alpha must lie in (0, 1/3)")
    if restarts < 1:
        raise InvalidArgumentError("restarts must be >= 1")
    n_keep = math.ceil((1.0 - trim_alpha) * k)
    centered = means - x

    if not np.any(centered):
        basis = np.zeros(d)
        basis[0] = 1.0
        return DirectionResult(basis, 0.0, tuple(range(n_keep)), degenerate=True,
                               objective_trace=(0.0,))

    rng = RngContract(0 if seed is None else seed).stream("trimmed-direction")
    starts = []
    if initial_direction is not None:
        v0 = np.asarray(initial_direction, dtype=float)
        if v0.shape != (d,) or not np.linalg.norm(v0) > 0:
            raise InvalidArgumentError("initial_direction must be a nonzero d-vector")
        starts.append(v0 / np.linalg.norm(v0))
    else:
        v0 = rng.standard_normal(d)
        starts.append(v0 / np.linalg.norm(v0))
    if restarts > 1:
        full = centered.T @ centered / k
        starts.append(_top_eigenvector(full, starts[0], power_iterations))
        if d == 2:
            # narrow corner basins elude random starts; a coarse angular scan
            # pins the right neighbourhood, the polish below does the rest
            thetas = np.linspace(0.0, math.pi, 256, endpoint=False)
            dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
            scores = np.sort((centered @ dirs.T) ** 2, axis=0)[:n_keep].mean(axis=0)
            starts.append(dirs[int(np.argmax(scores))])
        for _ in range(restarts - 2):
            v0 = rng.standard_normal(d)
            starts.append(v0 / np.linalg.norm(v0))

    def trim(vec: np.ndarray):
        scores = (centered @ vec) ** 2
        order = np.sort(np.argsort(scores, kind="stable")[:n_keep])
        return order, float(scores[order].mean())

    def trimmed_value(vec: np.ndarray) -> float:
        scores = (centered @ vec) ** 2
        return float(np.sort(scores)[:n_keep].mean())

    best = None
    for v in starts:
        active, objective = trim(v)
        trace = [objective]
        for _ in range(rounds):
            sub = centered[active]
            matrix = sub.T @ sub / n_keep
            candidate = _top_eigenvector(matrix, v, power_iterations)
            cand_active, cand_objective = trim(candidate)
            if cand_objective < objective:
                break
            moved = cand_objective > objective
            v, active, objective = candidate, cand_active, cand_objective
            trace.append(objective)
            if not moved:
                break
        if polish_angle_tolerance is not None:
            v, objective = _tangent_polish(trimmed_value, v, objective, polish_angle_tolerance)
            active, _ = trim(v)
            trace.append(objective)
        if best is None or objective > best[1]:
            best = (v, objective, active, trace)
    v, objective, active, trace = best
    return DirectionResult(v, objective, tuple(int(i) for i in active), objective == 0.0,
                           tuple(trace))


def descent_step(
    x,
    blk_means: Sequence[Sequence[float]],
    direction: DirectionResult,
    convention: MedianConvention = MedianConvention.MIDPOINT,
) -> np.ndarray:
    """One move x -> x - theta v with theta = -median(v^T (mean_k - x))."""
    x = np.asarray(x, dtype=float)
    means = np.asarray(blk_means, dtype=float)
    v = np.asarray(direction.direction, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise InvalidArgumentError("direction must be a unit vector")
    theta = -median((means - x) @ v, convention)
    return x - theta * v


def robust_mean_descent(
    sample,
    config: DescentConfig,
    convention: MedianConvention = MedianConvention.MIDPOINT,
    initial_directions: Optional[Sequence[Sequence[float]]] = None,
) -> Tuple[np.ndarray, List[Tuple[int, float]]]:
    """Trimmed-spectral descent from the geometric-MOM initialization.

    Returns the final iterate plus the per-step trimmed-objective trace.
    Stops after ``config.steps`` steps, or earlier when the trimmed objective
    no longer improves by ``stall_tolerance`` relatively or becomes degenerate.
    ``initial_directions`` overrides the per-step seeded direction draws (one
    starting vector per step), which makes the iteration rotation-equivariant
    under consistently rotated draws.
    """
    rows = as_vector_rows(sample)
    if config.k > rows.shape[0]:
        raise InvalidArgumentError("need K <= N")
    contract = RngContract(0 if config.seed is None else config.seed)
    part = partition_blocks(rows.shape[0], config.k, config.seed)
    means = block_means(rows, part)
    x = _geometric_median_of_means(means, convention)
    trace: List[Tuple[int, float]] = []
    previous = math.inf
    for step in range(config.steps):
        if initial_directions is not None:
            if step >= len(initial_directions):
                break
            init = np.asarray(initial_directions[step], dtype=float)
        else:
            init = contract.stream("descent-direction", step).standard_normal(rows.shape[1])
        direction = trimmed_direction(
            x,
            means,
            config.trim_alpha,
            rounds=config.inner_rounds,
            power_iterations=config.power_iterations,
            initial_direction=init,
        )
        trace.append((step, direction.objective))
        if direction.degenerate:
            break
        if config.stall_tolerance > 0 and direction.objective >= previous * (
            1.0 - config.stall_tolerance
        ):
            break
        x = descent_step(x, means, direction, convention)
        previous = direction.objective
    return x, trace


def _loss_difference_mom(blk_means: np.ndarray, mu: np.ndarray, nu: np.ndarray,
                         convention: MedianConvention) -> float:
    # ||X - mu||^2 - ||X - nu||^2 is affine in X, so its block means are affine
    # in the block means of X.
    offs = float(mu @ mu - nu @ nu)
    vals = -2.0 * blk_means @ (mu - nu) + offs
    return median(vals, convention)


def minmax_mom_mean_grid(
    sample,
    k: int,
    grid: Sequence[Sequence[float]],
    convention: MedianConvention = MedianConvention.MIDPOINT,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Exhaustive minmax-MOM mean over a finite candidate grid.

    Minimizes over mu in the grid the max over nu in the grid of the MOM
    estimate of ||X - mu||^2 - ||X - nu||^2. Ties break at the lowest index.
    """
    rows = as_vector_rows(sample)
    grid_arr = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid_arr.shape[0] < 1:
        raise InvalidArgumentError("grid must be nonempty")
    if grid_arr.shape[1] != rows.shape[1]:
        raise InvalidArgumentError("grid dimension must match the sample")
    part = partition_blocks(rows.shape[0], k, seed)
    means = block_means(rows, part)
    # proj[b, g] = mean_b . grid_g ; sq[g] = ||grid_g||^2
    proj = means @ grid_arr.T
    sq = np.einsum("ij,ij->i", grid_arr, grid_arr)
    n_grid = grid_arr.shape[0]
    worst = np.empty(n_grid)
    kk = means.shape[0]
    mid_lo, mid_hi = (kk - 1) // 2, kk // 2
    for i in range(n_grid):
        # vals[b, g] for the pair (mu = grid_i, nu = grid_g)
        vals = -2.0 * (proj[:, i][:, None] - proj) + (sq[i] - sq)[None, :]
        vals.sort(axis=0)
        if kk % 2 == 1:
            med = vals[mid_lo]
        elif convention is MedianConvention.LOWER:
            med = vals[mid_lo]
        elif convention is MedianConvention.UPPER:
            med = vals[mid_hi]
        else:
            med = 0.5 * (vals[mid_lo] + vals[mid_hi])
        worst[i] = med.max()
    return grid_arr[int(np.argmin(worst))].copy()


def minmax_mom_mean_gda(
    sample,
    config: GdaConfig,
    convention: MedianConvention = MedianConvention.MIDPOINT,
    init: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """First-order minmax-MOM mean solver with exact inner ascent.

    The inner supremum has a closed form: along any unit direction u, the
    best-response adversary sits at nu = mu + p u with p the median of the
    block-mean projections (m_k - mu)^T u, contributing p^2 to the objective.
    Each iteration samples seeded directions, ascends by picking the worst
    one (largest |median projection|), and descends mu by the median block's
    gradient along it: mu <- mu + 2 eta p u. Naive coupled per-block
    descent-ascent instead freezes onto a single block mean (the approach
    direction stops changing, so one block stays the median forever), which
    sits a whole block-spacing away from the variational solution.
    """
    rows = as_vector_rows(sample)
    n, d = rows.shape
    if config.k > n:
        raise InvalidArgumentError("need K <= N")
    part = partition_blocks(n, config.k, config.seed)
    means = block_means(rows, part)
    if init is None:
        mu = np.zeros(d)
    else:
        mu = np.asarray(init, dtype=float).copy()
        if mu.shape != (d,):
            raise InvalidArgumentError("init must be a d-vector")
    eta = config.step_size
    rng = RngContract(0 if config.seed is None else config.seed).stream("minmax-gda-directions")
    directions_per_step = max(16, 4 * d)
    kk = means.shape[0]
    mid_lo, mid_hi = (kk - 1) // 2, kk // 2
    for _ in range(config.iterations):
        if d == 1:
            dirs = np.array([[1.0]])
        else:
            dirs = rng.standard_normal((directions_per_step, d))
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        proj = np.sort((means - mu) @ dirs.T, axis=0)
        if kk % 2 == 1:
            med = proj[mid_lo]
        elif convention is MedianConvention.LOWER:
            med = proj[mid_lo]
        elif convention is MedianConvention.UPPER:
            med = proj[mid_hi]
        else:
            med = 0.5 * (proj[mid_lo] + proj[mid_hi])
        worst = int(np.argmax(np.abs(med)))
        mu = mu + 2.0 * eta * med[worst] * dirs[worst]
    return mu


def tukey_depth_approx(point, sample, directions: int = 64, seed: Optional[int] = None) -> float:
    """Approximate halfspace depth via seeded random directions (exact for d=1)."""
    if directions < 1:
        raise InvalidArgumentError("directions must be >= 1")
    rows = as_vector_rows(sample)
    point = np.atleast_1d(np.asarray(point, dtype=float))
    n, d = rows.shape
    if point.shape != (d,):
        raise InvalidArgumentError("point dimension must match the sample")
    if d == 1:
        below = float(np.count_nonzero(rows[:, 0] <= point[0])) / n
        above = float(np.count_nonzero(rows[:, 0] >= point[0])) / n
        return min(below, above)
    rng = RngContract(0 if seed is None else seed).stream("tukey-directions")
    u = rng.standard_normal((directions, d))
    norms = np.linalg.norm(u, axis=1)
    norms[norms == 0.0] = 1.0
    u /= norms[:, None]
    proj = rows @ u.T  # (n, directions)
    cut = point @ u.T
    lower = (proj <= cut).mean(axis=0)
    upper = (proj >= cut).mean(axis=0)
    return float(min(lower.min(), upper.min()))


def tukey_median_approx(
    sample,
    candidate_count: int = 32,
    directions: int = 64,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Deepest point among sample points, a coordinatewise MOM, and seeded
    convex combinations of sample pairs; depth measured on a shared direction set."""
    if candidate_count < 1 or directions < 1:
        raise InvalidArgumentError("counts must be >= 1")
    rows = as_vector_rows(sample)
    n, d = rows.shape
    contract = RngContract(0 if seed is None else seed)
    k_mom = max(1, int(math.isqrt(n)))
    candidates = [rows, coordinatewise_mom(rows, k_mom)[None, :]]
    rng = contract.stream("tukey-candidates")
    idx = rng.integers(0, n, size=(candidate_count, 2))
    w = rng.random(candidate_count)[:, None]
    candidates.append(w * rows[idx[:, 0]] + (1.0 - w) * rows[idx[:, 1]])
    cand = np.vstack(candidates)

    if d == 1:
        depths = np.array([tukey_depth_approx(c, rows) for c in cand])
        return cand[int(np.argmax(depths))].copy()

    rng_dir = contract.stream("tukey-directions")
    u = rng_dir.standard_normal((directions, d))
    norms = np.linalg.norm(u, axis=1)
    norms[norms == 0.0] = 1.0
    u /= norms[:, None]
    proj = rows @ u.T  # (n, directions)
    cuts = cand @ u.T  # (m, directions)
    best_idx, best_depth = 0, -1.0
    for i in range(cand.shape[0]):
        lower = (proj <= cuts[i]).mean(axis=0)
        upper = (proj >= cuts[i]).mean(axis=0)
        depth = min(lower.min(), upper.min())
        if depth > best_depth:
            best_idx, best_depth = i, depth
    return cand[best_idx].copy()


def smooth_clip_cubic(t: np.ndarray) -> np.ndarray:
    """Piecewise-cubic clamp t - t^3/6 on [-sqrt(2), sqrt(2)], +/- 2 sqrt(2)/3 outside."""
    t = np.asarray(t, dtype=float)
    root2 = math.sqrt(2.0)
    inner = t - t**3 / 6.0
    return np.where(t < -root2, -2.0 * root2 / 3.0, np.where(t > root2, 2.0 * root2 / 3.0, inner))


def pac_bayes_direction_estimate(sample, u, config: PacBayesConfig) -> float:
    """Gaussian-smoothed clipped estimate of the directional mean E[u^T X].

    Averages E[psi(Z_i)] over observations, Z_i Gaussian with mean
    lambda u^T X_i and variance beta lambda^2 ||X_i||^2, by Gauss-Hermite
    quadrature, then rescales by 1/lambda.
    """
    rows = as_vector_rows(sample)
    u = np.asarray(u, dtype=float)
    if u.shape != (rows.shape[1],):
        raise InvalidArgumentError("u dimension must match the sample")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise InvalidArgumentError("u must be a unit vector")
    lam = config.lam
    means = lam * rows @ u
    sds = math.sqrt(config.beta) * lam * np.linalg.norm(rows, axis=1)
    nodes, weights = np.polynomial.hermite.hermgauss(config.quadrature_nodes)
    # E[f(N(m, s^2))] = pi^{-1/2} sum_j w_j f(m + sqrt(2) s t_j)
    z = means[:, None] + math.sqrt(2.0) * sds[:, None] * nodes[None, :]
    expectations = smooth_clip_cubic(z) @ weights / math.sqrt(math.pi)
    return float(expectations.sum() / (rows.shape[0] * lam))


def pac_bayes_minmax_mean(
    sample,
    config: PacBayesConfig,
    candidates: Optional[Sequence[Sequence[float]]] = None,
) -> np.ndarray:
    """Minmax mean from smoothed directional estimates over sampled directions.

    Minimizes over a seeded candidate set (centered at the coordinatewise MOM
    unless supplied) the max over sampled +/- directions of
    |u^T mu - direction_estimate(u)|.
    """
    rows = as_vector_rows(sample)
    n, d = rows.shape
    if config.direction_count < 2 * d:
        raise InvalidArgumentError("direction_count must be at least 2 d")
    contract = RngContract(0 if config.seed is None else config.seed)
    rng = contract.stream("pac-bayes-directions")
    u = rng.standard_normal((config.direction_count, d))
    norms = np.linalg.norm(u, axis=1)
    norms[norms == 0.0] = 1.0
    u /= norms[:, None]
    u = np.vstack([u, -u])
    estimates = np.array([pac_bayes_direction_estimate(rows, ui, config) for ui in u])

    if candidates is not None:
        cand = np.atleast_2d(np.asarray(candidates, dtype=float))
        scores = np.abs(cand @ u.T - estimates[None, :]).max(axis=1)
        return cand[int(np.argmin(scores))].copy()

    center = coordinatewise_mom(rows, max(1, int(math.isqrt(n))))
    scale = float(np.median(np.linalg.norm(rows - center, axis=1))) / math.sqrt(n) + 1e-12
    best = center
    best_score = float(np.abs(best @ u.T - estimates).max())
    rng_c = contract.stream("pac-bayes-candidates")
    for stage in range(3):
        radius = 4.0 * scale * (0.3**stage)
        cand = best + radius * rng_c.standard_normal((64, d))
        cand = np.vstack([best[None, :], cand])
        scores = np.abs(cand @ u.T - estimates[None, :]).max(axis=1)
        j = int(np.argmin(scores))
        if scores[j] < best_score:
            best, best_score = cand[j], float(scores[j])
    return np.asarray(best, dtype=float).copy()
