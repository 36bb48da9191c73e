"""Configuration-driven Monte-Carlo experiment runner with deviation reports.

Pits estimators against seeded generators and contaminators, measures per-trial
error against the recorded truth, and aggregates error quantiles plus empirical
exceedance frequencies of a configured sub-Gaussian envelope. Reports are fully
reproducible from the master seed and independent of the worker count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import (
    InvalidArgumentError,
    NumericFailureError,
    ScalarSample,
    stream_seed,
)
from .datagen import (
    ContaminationSpec,
    DistributionSpec,
    TruthRecord,
    contaminate,
    regression_instance,
    sample_clean,
)
from .density import DensityFamily, DiscreteDensity, hellinger_sq, rho_estimate
from .multivariate import (
    DescentConfig,
    GdaConfig,
    PacBayesConfig,
    coordinatewise_mom,
    geometric_mom_init,
    minmax_mom_mean_gda,
    pac_bayes_minmax_mean,
    robust_mean_descent,
    tukey_median_approx,
)
from .regression import FitConfig, LossModel, erm_fit, minmax_mom_fit, sigma_norm_error
from .univariate import (
    CatoniConfig,
    HuberConfig,
    LepskiConfig,
    SmoothedMomConfig,
    catoni_estimate,
    empirical_mean,
    huber_m_estimate,
    lepski_adaptive_mom,
    mom_estimate,
    smoothed_mom_estimate,
    trimmed_mean,
)

_SCENARIOS = (
    "univariate-deviation",
    "multivariate-deviation",
    "regression",
    "density",
    "descent-trace",
)

_CSV_COLUMNS = ("scenario", "estimator", "metric", "t_level", "value", "stderr", "trials", "seed")


@dataclass(frozen=True)
class EstimatorSpec:
    """A named estimator entry: ``kind`` picks the algorithm, params tune it."""

    name: str
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, **self.params}

    @staticmethod
    def from_dict(data: Mapping[str, object]) -> "EstimatorSpec":
        data = dict(data)
        return EstimatorSpec(name=data.pop("name"), kind=data.pop("kind"), params=data)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n: int
    trials: int
    estimators: Tuple[EstimatorSpec, ...]
    d: int = 1
    master_seed: int = 0
    distribution: DistributionSpec = DistributionSpec("gaussian")
    contamination: ContaminationSpec = ContaminationSpec()
    deviation_levels: Tuple[float, ...] = ()
    envelope_b: float = math.sqrt(2.0)
    quantiles: Tuple[float, ...] = (0.5, 0.9, 0.99)
    workers: int = 1
    output_path: Optional[str] = None
    output_format: str = "csv"
    regression: Optional[dict] = None
    density: Optional[dict] = None

    def __post_init__(self):
        if self.scenario not in _SCENARIOS:
            raise InvalidArgumentError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise InvalidArgumentError("trials must be >= 1")
        if not self.estimators:
            raise InvalidArgumentError("estimator list must be nonempty")
        if self.n < 1 or self.d < 1:
            raise InvalidArgumentError("need N >= 1 and d >= 1")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")
        if self.output_format not in ("csv", "json-lines"):
            raise InvalidArgumentError("format must be csv or json-lines")
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "deviation_levels", tuple(float(t) for t in self.deviation_levels))
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))

    @staticmethod
    def from_dict(data: Mapping[str, object]) -> "ExperimentConfig":
        data = dict(data)
        try:
            estimators = tuple(EstimatorSpec.from_dict(e) for e in data.pop("estimators"))
            dist = data.pop("distribution", None)
            cont = data.pop("contamination", None)
            return ExperimentConfig(
                scenario=data.pop("scenario"),
                n=int(data.pop("n")),
                trials=int(data.pop("trials")),
                estimators=estimators,
                d=int(data.pop("d", 1)),
                master_seed=int(data.pop("master_seed", 0)),
                distribution=DistributionSpec.from_dict(dist) if dist else DistributionSpec("gaussian"),
                contamination=ContaminationSpec.from_dict(cont) if cont else ContaminationSpec(),
                deviation_levels=tuple(data.pop("deviation_levels", ())),
                envelope_b=float(data.pop("envelope_b", math.sqrt(2.0))),
                quantiles=tuple(data.pop("quantiles", (0.5, 0.9, 0.99))),
                workers=int(data.pop("workers", 1)),
                output_path=data.pop("output_path", None),
                output_format=data.pop("format", data.pop("output_format", "csv")),
                regression=data.pop("regression", None),
                density=data.pop("density", None),
            )
        except KeyError as exc:
            raise InvalidArgumentError(f"config is missing required field {exc}") from exc


@dataclass
class EstimatorReport:
    name: str
    errors: np.ndarray  # per-trial error, NaN where the estimator failed
    failures: int
    runtime_mean_s: float
    quantiles: Dict[float, float]
    exceedances: List[Tuple[float, float, float, float]]  # (t, envelope, freq, stderr)
    extra: Dict[str, float] = field(default_factory=dict)
    trace: List[Tuple[int, float]] = field(default_factory=list)


@dataclass
class DeviationReport:
    scenario: str
    trials: int
    master_seed: int
    n: int
    d: int
    envelope_b: float
    sigma: Optional[float]
    estimators: List[EstimatorReport]

    def estimator(self, name: str) -> EstimatorReport:
        for est in self.estimators:
            if est.name == name:
                return est
        raise KeyError(name)


def _seed_int(master_seed: int, label: str, index: int = 0) -> int:
    return int(stream_seed(master_seed, label, index).generate_state(1, np.uint64)[0] >> 1)


def _oracle_sigma(truth: TruthRecord) -> Optional[float]:
    if truth.infinite_variance or truth.true_covariance is None:
        return None
    cov = np.atleast_2d(truth.true_covariance)
    if cov.shape == (1, 1):
        return math.sqrt(float(cov[0, 0]))
    return math.sqrt(float(np.linalg.eigvalsh(cov)[-1]))


def _univariate_estimate(spec: EstimatorSpec, sample: ScalarSample, truth: TruthRecord, n: int) -> float:
    p = spec.params
    kind = spec.kind
    if kind == "empirical_mean":
        return empirical_mean(sample)
    if kind == "mom":
        return mom_estimate(sample, int(p["k"]), seed=p.get("shuffle_seed"))
    if kind == "catoni":
        alpha = p.get("alpha")
        if alpha is None:
            sigma = _oracle_sigma(truth)
            if sigma is None:
                raise NumericFailureError("oracle alpha needs a finite-variance truth")
            alpha = math.sqrt(float(p["oracle_t"]) / n) / sigma
        return catoni_estimate(
            sample,
            CatoniConfig(float(alpha), p.get("tolerance"), int(p.get("max_iterations", 200))),
        )
    if kind == "huber":
        return huber_m_estimate(
            sample, HuberConfig(float(p["c"]), p.get("tolerance"), int(p.get("max_iterations", 200)))
        )
    if kind == "smoothed_mom":
        delta = p.get("delta")
        if delta is None:
            sigma = _oracle_sigma(truth)
            if sigma is None:
                raise NumericFailureError("oracle delta needs a finite-variance truth")
            delta = sigma
        return smoothed_mom_estimate(
            sample,
            SmoothedMomConfig(int(p["k"]), float(delta), p.get("tolerance"),
                              int(p.get("max_iterations", 200))),
        )
    if kind == "lepski":
        sigma = p.get("sigma")
        if sigma is None:
            sigma = _oracle_sigma(truth)
            if sigma is None:
                raise NumericFailureError("oracle sigma needs a finite-variance truth")
        return lepski_adaptive_mom(sample, LepskiConfig(float(sigma), float(p.get("L", 1.0))))[0]
    if kind == "trimmed_mean":
        return trimmed_mean(sample, float(p["fraction"]))
    raise InvalidArgumentError(f"unknown univariate estimator kind {kind!r}")


def _multivariate_estimate(
    spec: EstimatorSpec, sample, truth: TruthRecord, n: int, trial_seed: int
):
    p = spec.params
    kind = spec.kind
    if kind == "empirical_mean":
        return sample.rows.mean(axis=0)
    if kind == "coordinatewise_mom":
        return coordinatewise_mom(sample, int(p["k"]), seed=p.get("shuffle_seed", trial_seed))
    if kind == "geometric_mom_init":
        return geometric_mom_init(sample, int(p["k"]), seed=p.get("shuffle_seed", trial_seed))
    if kind == "descent":
        config = DescentConfig(
            k=int(p["k"]),
            trim_alpha=float(p.get("trim_alpha", 0.1)),
            inner_rounds=int(p.get("inner_rounds", 8)),
            power_iterations=int(p.get("power_iterations", 32)),
            max_steps=p.get("max_steps"),
            stall_tolerance=float(p.get("stall_tolerance", 1e-3)),
            seed=trial_seed,
        )
        return robust_mean_descent(sample, config)
    if kind == "minmax_gda":
        config = GdaConfig(
            step_size=float(p.get("step_size", 0.05)),
            iterations=int(p.get("iterations", 500)),
            k=int(p["k"]),
            seed=trial_seed,
        )
        return minmax_mom_mean_gda(sample, config)
    if kind == "tukey_median":
        return tukey_median_approx(
            sample,
            candidate_count=int(p.get("candidate_count", 32)),
            directions=int(p.get("directions", 64)),
            seed=trial_seed,
        )
    if kind == "pac_bayes":
        lam, beta = p.get("lam"), p.get("beta")
        if lam is None or beta is None:
            raise InvalidArgumentError("pac_bayes needs explicit lam and beta")
        config = PacBayesConfig(
            lam=float(lam),
            beta=float(beta),
            direction_count=int(p.get("direction_count", 64)),
            quadrature_nodes=int(p.get("quadrature_nodes", 40)),
            seed=trial_seed,
        )
        return pac_bayes_minmax_mean(sample, config)
    raise InvalidArgumentError(f"unknown multivariate estimator kind {kind!r}")


def _loss_from_params(p: Mapping[str, object]) -> LossModel:
    return LossModel(kind=p.get("loss", "square"), alpha=float(p.get("alpha", 1.0)))


def _run_trial(config: ExperimentConfig, trial: int):
    """One seeded trial: generate, contaminate, run every estimator in isolation.

    Returns (per-estimator error array entry, runtime, trace) tuples; a
    numeric failure in one estimator is recorded without touching the others.
    """
    data_seed = _seed_int(config.master_seed, "trial-data", trial)
    contam_seed = _seed_int(config.master_seed, "trial-contamination", trial)
    scenario = config.scenario

    results = []
    if scenario in ("univariate-deviation", "multivariate-deviation", "descent-trace"):
        d = config.d if scenario != "univariate-deviation" else 1
        sample, truth = sample_clean(config.distribution, config.n, d, data_seed)
        sample, truth = contaminate(sample, truth, config.contamination, contam_seed)
        mean_vec = np.atleast_1d(np.asarray(truth.true_mean, dtype=float))
        for idx, spec in enumerate(config.estimators):
            est_seed = _seed_int(config.master_seed, f"estimator-{idx}", trial)
            start = time.perf_counter()
            trace: List[Tuple[int, float]] = []
            try:
                if scenario == "univariate-deviation":
                    value = _univariate_estimate(spec, sample, truth, config.n)
                    error = abs(value - float(mean_vec[0]))
                else:
                    value = _multivariate_estimate(spec, sample, truth, config.n, est_seed)
                    if isinstance(value, tuple):
                        value, trace = value
                    error = float(np.linalg.norm(np.atleast_1d(value) - mean_vec))
                results.append((error, time.perf_counter() - start, False, trace, None))
            except NumericFailureError:
                results.append((math.nan, time.perf_counter() - start, True, [], None))
        return results

    if scenario == "regression":
        reg = config.regression or {}
        f_star = np.asarray(reg.get("f_star", np.zeros(config.d)), dtype=float)
        noise = DistributionSpec.from_dict(reg.get("noise", {"kind": "gaussian"}))
        dataset, truth = regression_instance(
            reg.get("design", "gaussian"),
            f_star,
            noise,
            config.n,
            seed=data_seed,
            design_dof=float(reg.get("design_dof", 4.0)),
        )
        if config.contamination.kind != "none":
            targets, _ = contaminate(
                ScalarSample(dataset.targets), truth, config.contamination, contam_seed
            )
            from .regression import RegressionDataset

            dataset = RegressionDataset(dataset.features, targets.values)
        for idx, spec in enumerate(config.estimators):
            p = spec.params
            loss = _loss_from_params(p)
            fit_config = FitConfig(
                step_size=float(p.get("step_size", 0.1)),
                iterations=int(p.get("iterations", 500)),
                k=int(p.get("k", 1)),
                seed=_seed_int(config.master_seed, f"estimator-{idx}", trial),
                gradient_tolerance=float(p.get("gradient_tolerance", 0.0)),
            )
            start = time.perf_counter()
            try:
                if spec.kind == "erm":
                    f_hat = erm_fit(dataset, loss, fit_config)
                elif spec.kind == "minmax_mom":
                    f_hat = minmax_mom_fit(dataset, loss, fit_config)
                else:
                    raise InvalidArgumentError(f"unknown regression estimator kind {spec.kind!r}")
                error = sigma_norm_error(f_hat, truth.true_weights, truth.true_covariance)
                results.append((error, time.perf_counter() - start, False, [], None))
            except NumericFailureError:
                results.append((math.nan, time.perf_counter() - start, True, [], None))
        return results

    # density scenario
    dens = config.density or {}
    family = DensityFamily(tuple(DiscreteDensity(np.asarray(m, dtype=float)) for m in dens["family"]))
    true_index = int(dens.get("true_index", 0))
    truth_density = family.candidates[true_index]
    rng = np.random.default_rng(stream_seed(config.master_seed, "trial-data", trial))
    draws = rng.choice(truth_density.support_size, size=config.n, p=truth_density.masses)
    for spec in config.estimators:
        if spec.kind != "rho":
            raise InvalidArgumentError(f"unknown density estimator kind {spec.kind!r}")
        start = time.perf_counter()
        chosen_index, chosen = rho_estimate(family, draws)
        error = math.sqrt(hellinger_sq(chosen, truth_density))
        correct = 1.0 if chosen_index == true_index else 0.0
        results.append((error, time.perf_counter() - start, False, [], correct))
    return results


def run_experiment(config: ExperimentConfig) -> DeviationReport:
    """Run all trials (optionally across worker threads) and aggregate.

    Trials are independent jobs seeded by (master_seed, trial index); the
    aggregation sorts by trial index so the report does not depend on the
    worker count. Failed trials count toward envelope exceedances.
    """
    trials = config.trials
    if config.workers == 1:
        outcomes = [_run_trial(config, t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(lambda t: _run_trial(config, t), range(trials)))

    sigma = None
    if config.scenario in ("univariate-deviation", "multivariate-deviation", "descent-trace"):
        d = config.d if config.scenario != "univariate-deviation" else 1
        _, probe_truth = sample_clean(config.distribution, 1, d, 0)
        sigma = _oracle_sigma(probe_truth)

    reports: List[EstimatorReport] = []
    for idx, spec in enumerate(config.estimators):
        errors = np.array([outcomes[t][idx][0] for t in range(trials)])
        runtimes = np.array([outcomes[t][idx][1] for t in range(trials)])
        failures = int(sum(outcomes[t][idx][2] for t in range(trials)))
        ok = ~np.isnan(errors)
        sorted_ok = np.sort(errors[ok])
        quantiles = {
            q: (float(np.quantile(sorted_ok, q)) if sorted_ok.size else math.nan)
            for q in config.quantiles
        }
        exceedances = []
        if sigma is not None and config.deviation_levels:
            for t_level in config.deviation_levels:
                envelope = config.envelope_b * sigma * math.sqrt((1.0 + t_level) / config.n)
                hits = int(np.count_nonzero(errors[ok] > envelope)) + failures
                freq = hits / trials
                stderr = math.sqrt(freq * (1.0 - freq) / trials)
                exceedances.append((t_level, envelope, freq, stderr))
        extra: Dict[str, float] = {}
        if config.scenario == "density":
            corrs = [outcomes[t][idx][4] for t in range(trials)]
            extra["selection_accuracy"] = float(np.mean([c for c in corrs if c is not None]))
        trace: List[Tuple[int, float]] = []
        if config.scenario == "descent-trace" and trials > 0:
            trace = list(outcomes[0][idx][3])
        reports.append(
            EstimatorReport(
                name=spec.name,
                errors=errors,
                failures=failures,
                runtime_mean_s=float(runtimes.mean()) if trials else math.nan,
                quantiles=quantiles,
                exceedances=exceedances,
                extra=extra,
                trace=trace,
            )
        )
    return DeviationReport(
        scenario=config.scenario,
        trials=trials,
        master_seed=config.master_seed,
        n=config.n,
        d=config.d,
        envelope_b=config.envelope_b,
        sigma=sigma,
        estimators=reports,
    )


def compare_estimators(report: DeviationReport) -> dict:
    """Per-quantile rankings plus pairwise win/loss counts across quantiles."""
    levels = sorted({q for est in report.estimators for q in est.quantiles})
    rankings = {}
    for q in levels:
        order = sorted(
            range(len(report.estimators)),
            key=lambda i: (report.estimators[i].quantiles.get(q, math.inf), i),
        )
        rankings[q] = [report.estimators[i].name for i in order]
    wins: Dict[Tuple[str, str], int] = {}
    names = [est.name for est in report.estimators]
    for i, a in enumerate(report.estimators):
        for j, b in enumerate(report.estimators):
            if i == j:
                continue
            count = 0
            for q in levels:
                va, vb = a.quantiles.get(q, math.nan), b.quantiles.get(q, math.nan)
                if not (math.isnan(va) or math.isnan(vb)) and va < vb:
                    count += 1
            wins[(names[i], names[j])] = count
    return {"rankings": rankings, "wins": wins}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def report_rows(report: DeviationReport) -> List[dict]:
    """Flatten a report into emission rows with a stable order.

    Wall-clock runtimes stay out of the rows so byte-identical emission across
    worker counts holds.
    """
    rows: List[dict] = []

    def add(estimator: str, metric: str, t_level, value, stderr=None):
        rows.append(
            {
                "scenario": report.scenario,
                "estimator": estimator,
                "metric": metric,
                "t_level": t_level,
                "value": value,
                "stderr": stderr,
                "trials": report.trials,
                "seed": report.master_seed,
            }
        )

    for est in report.estimators:
        for q in sorted(est.quantiles):
            add(est.name, "error_quantile", q, est.quantiles[q])
        ok = est.errors[~np.isnan(est.errors)]
        add(est.name, "error_mean", None, float(ok.mean()) if ok.size else math.nan)
        add(est.name, "failures", None, float(est.failures))
        for t_level, envelope, freq, stderr in est.exceedances:
            add(est.name, "envelope_exceedance", t_level, freq, stderr)
            add(est.name, "envelope_value", t_level, envelope)
        for key in sorted(est.extra):
            add(est.name, key, None, est.extra[key])
        for step, objective in est.trace:
            add(est.name, "trace_objective", float(step), objective)
    return rows


def emit_report(report: DeviationReport, path: str, output_format: str = "csv") -> None:
    """Write the report as CSV or JSON-lines (UTF-8, '.' decimal separator,
    floats at 17 significant digits so parsing round-trips exactly)."""
    rows = report_rows(report)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if output_format == "csv":
                fh.write(",".join(_CSV_COLUMNS) + "\n")
                for row in rows:
                    fh.write(",".join(_fmt(row[c]) for c in _CSV_COLUMNS) + "\n")
            elif output_format == "json-lines":
                for row in rows:
                    out = {
                        c: (row[c] if not isinstance(row[c], float) else float(_fmt(row[c])))
                        for c in _CSV_COLUMNS
                    }
                    fh.write(json.dumps(out) + "\n")
            else:
                raise InvalidArgumentError(f"unknown format {output_format!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path!r}: {exc}") from exc


def parse_report_rows(path: str, output_format: str = "csv") -> List[dict]:
    """Read back rows written by emit_report, restoring numeric fields."""
    rows: List[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        if output_format == "csv":
            header = fh.readline().rstrip("\n").split(",")
            for line in fh:
                parts = line.rstrip("\n").split(",")
                row = dict(zip(header, parts))
                for key in ("t_level", "value", "stderr"):
                    row[key] = float(row[key]) if row[key] != "" else None
                row["trials"] = int(row["trials"])
                row["seed"] = int(row["seed"])
                rows.append(row)
        else:
            for line in fh:
                rows.append(json.loads(line))
    return rows
