import json
import math
import subprocess
import sys

import numpy as np
import pytest

from robest import (
    ContaminationSpec,
    DistributionSpec,
    EstimatorSpec,
    ExperimentConfig,
    compare_estimators,
    emit_report,
    parse_report_rows,
    run_experiment,
)
from robest.harness import report_rows


def univariate_config(**overrides):
    base = dict(
        scenario="univariate-deviation",
        n=100,
        trials=50,
        master_seed=3,
        distribution=DistributionSpec("gaussian", {"mu": 0.0, "sigma": 1.0}),
        estimators=(
            EstimatorSpec("mean", "empirical_mean"),
            EstimatorSpec("mom5", "mom", {"k": 5}),
        ),
        deviation_levels=(1.0, 2.0),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_point_mass_all_errors_zero(self):
        config = univariate_config(
            trials=5,
            distribution=DistributionSpec("point_mass", {"value": 2.0}),
        )
        report = run_experiment(config)
        for est in report.estimators:
            assert np.all(est.errors == 0.0)
            assert est.failures == 0

    def test_reports_reproducible(self):
        config = univariate_config()
        a = run_experiment(config)
        b = run_experiment(config)
        for ea, eb in zip(a.estimators, b.estimators):
            np.testing.assert_array_equal(ea.errors, eb.errors)
            assert ea.quantiles == eb.quantiles

    def test_worker_count_does_not_change_rows(self, tmp_path):
        config = univariate_config()
        report1 = run_experiment(config)
        report4 = run_experiment(univariate_config(workers=4))
        p1, p4 = tmp_path / "w1.csv", tmp_path / "w4.csv"
        emit_report(report1, str(p1))
        emit_report(report4, str(p4))
        assert p1.read_bytes() == p4.read_bytes()

    def test_exceedance_fields(self):
        report = run_experiment(univariate_config())
        est = report.estimator("mean")
        assert len(est.exceedances) == 2
        for t_level, envelope, freq, stderr in est.exceedances:
            assert 0.0 <= freq <= 1.0
            assert stderr == pytest.approx(math.sqrt(freq * (1 - freq) / report.trials))
            assert envelope == pytest.approx(
                report.envelope_b * report.sigma * math.sqrt((1 + t_level) / report.n)
            )

    def test_quantiles_monotone(self):
        report = run_experiment(univariate_config(trials=200))
        for est in report.estimators:
            qs = [est.quantiles[q] for q in sorted(est.quantiles)]
            assert qs == sorted(qs)

    def test_failure_isolation(self):
        # catoni with a one-iteration cap fails; the mean's results must be
        # identical to a solo run
        failing = EstimatorSpec(
            "bad_catoni", "catoni", {"alpha": 1.0, "max_iterations": 1, "tolerance": 1e-15}
        )
        combo = run_experiment(
            univariate_config(estimators=(EstimatorSpec("mean", "empirical_mean"), failing))
        )
        solo = run_experiment(
            univariate_config(estimators=(EstimatorSpec("mean", "empirical_mean"),))
        )
        assert combo.estimator("bad_catoni").failures == combo.trials
        np.testing.assert_array_equal(
            combo.estimator("mean").errors, solo.estimator("mean").errors
        )

    def test_infinite_variance_suppresses_envelopes(self):
        config = univariate_config(
            distribution=DistributionSpec("student_t", {"dof": 1.5}), trials=10
        )
        report = run_experiment(config)
        assert report.sigma is None
        for est in report.estimators:
            assert est.exceedances == []

    def test_multivariate_scenario(self):
        config = ExperimentConfig(
            scenario="multivariate-deviation",
            n=200,
            d=3,
            trials=20,
            master_seed=9,
            distribution=DistributionSpec("gaussian"),
            estimators=(
                EstimatorSpec("mean", "empirical_mean"),
                EstimatorSpec("cw_mom", "coordinatewise_mom", {"k": 10}),
                EstimatorSpec("descent", "descent", {"k": 10}),
                EstimatorSpec("gda", "minmax_gda", {"k": 10, "iterations": 200}),
            ),
        )
        report = run_experiment(config)
        for est in report.estimators:
            assert est.failures == 0
            assert np.all(np.isfinite(est.errors))

    def test_regression_scenario_with_label_corruption(self):
        config = ExperimentConfig(
            scenario="regression",
            n=400,
            d=2,
            trials=10,
            master_seed=5,
            contamination=ContaminationSpec(
                kind="adversarial", count=8, strategy="far_constant",
                params={"magnitude": 1e4},
            ),
            estimators=(
                EstimatorSpec("ls", "erm", {"loss": "square"}),
                EstimatorSpec(
                    "mom_huber", "minmax_mom",
                    {"loss": "huber", "alpha": 1.5, "k": 10, "step_size": 0.2, "iterations": 400},
                ),
            ),
            regression={
                "design": "gaussian",
                "f_star": [1.0, -1.0],
                "noise": {"kind": "gaussian", "mu": 0.0, "sigma": 1.0},
            },
        )
        report = run_experiment(config)
        assert report.estimator("mom_huber").quantiles[0.5] < report.estimator("ls").quantiles[0.5]

    def test_density_scenario_selection_accuracy(self):
        family = [
            [0.7, 0.1, 0.1, 0.1],
            [0.1, 0.7, 0.1, 0.1],
            [0.1, 0.1, 0.7, 0.1],
        ]
        config = ExperimentConfig(
            scenario="density",
            n=100,
            trials=30,
            master_seed=4,
            estimators=(EstimatorSpec("rho", "rho"),),
            density={"family": family, "true_index": 1},
        )
        report = run_experiment(config)
        assert report.estimator("rho").extra["selection_accuracy"] >= 0.99

    def test_descent_trace_scenario(self):
        config = ExperimentConfig(
            scenario="descent-trace",
            n=300,
            d=2,
            trials=3,
            master_seed=6,
            distribution=DistributionSpec("gaussian"),
            estimators=(EstimatorSpec("descent", "descent", {"k": 10}),),
        )
        report = run_experiment(config)
        trace = report.estimator("descent").trace
        assert trace and all(len(entry) == 2 for entry in trace)


class TestCompare:
    def test_single_estimator(self):
        report = run_experiment(
            univariate_config(estimators=(EstimatorSpec("mean", "empirical_mean"),))
        )
        summary = compare_estimators(report)
        assert all(ranking == ["mean"] for ranking in summary["rankings"].values())

    def test_identical_estimators_tie(self):
        report = run_experiment(
            univariate_config(
                estimators=(
                    EstimatorSpec("a", "mom", {"k": 5}),
                    EstimatorSpec("b", "mom", {"k": 5}),
                )
            )
        )
        summary = compare_estimators(report)
        assert summary["wins"][("a", "b")] == 0
        assert summary["wins"][("b", "a")] == 0

    def test_mom_beats_mean_on_three_point_tail(self):
        config = ExperimentConfig(
            scenario="univariate-deviation",
            n=50,
            trials=3000,
            master_seed=12,
            distribution=DistributionSpec("three_point", {"sigma": 1.0, "t": 1.0, "n": 50}),
            estimators=(
                EstimatorSpec("mean", "empirical_mean"),
                EstimatorSpec("mom", "mom", {"k": 10}),
            ),
        )
        summary = compare_estimators(run_experiment(config))
        assert summary["rankings"][0.99][0] == "mom"


class TestEmitAndParse:
    def test_csv_round_trip_full_precision(self, tmp_path):
        report = run_experiment(univariate_config())
        path = tmp_path / "report.csv"
        emit_report(report, str(path), "csv")
        parsed = parse_report_rows(str(path), "csv")
        original = report_rows(report)
        assert len(parsed) == len(original)
        for row, orig in zip(parsed, original):
            assert row["estimator"] == orig["estimator"]
            assert row["metric"] == orig["metric"]
            if orig["value"] is not None and not math.isnan(orig["value"]):
                assert row["value"] == orig["value"]  # exact float round trip

    def test_json_lines_round_trip(self, tmp_path):
        report = run_experiment(univariate_config())
        path = tmp_path / "report.jsonl"
        emit_report(report, str(path), "json-lines")
        parsed = parse_report_rows(str(path), "json-lines")
        original = report_rows(report)
        for row, orig in zip(parsed, original):
            if orig["value"] is not None and not math.isnan(orig["value"]):
                assert row["value"] == orig["value"]

    def test_no_deviation_levels_no_exceedance_rows(self, tmp_path):
        report = run_experiment(univariate_config(deviation_levels=()))
        path = tmp_path / "plain.csv"
        emit_report(report, str(path))
        rows = parse_report_rows(str(path))
        assert all(r["metric"] != "envelope_exceedance" for r in rows)
        assert any(r["metric"] == "error_quantile" for r in rows)

    def test_unwritable_path(self, tmp_path):
        report = run_experiment(univariate_config(trials=2))
        with pytest.raises(OSError):
            emit_report(report, str(tmp_path / "missing" / "report.csv"))


class TestCli:
    def _write_config(self, tmp_path, **overrides):
        config = {
            "scenario": "univariate-deviation",
            "n": 60,
            "trials": 20,
            "master_seed": 2,
            "distribution": {"kind": "gaussian", "mu": 0.0, "sigma": 1.0},
            "estimators": [
                {"name": "mean", "kind": "empirical_mean"},
                {"name": "mom", "kind": "mom", "k": 4},
            ],
        }
        config.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        return path

    def _run(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "robest.cli", *args], capture_output=True, text=True
        )

    def test_success_exit_zero(self, tmp_path):
        cfg = self._write_config(tmp_path)
        out = tmp_path / "out.csv"
        result = self._run("deviate", "--config", str(cfg), "--out", str(out))
        assert result.returncode == 0, result.stderr
        assert out.exists()

    def test_scenario_subcommand_mismatch_exit_two(self, tmp_path):
        cfg = self._write_config(tmp_path)
        result = self._run("regress", "--config", str(cfg))
        assert result.returncode == 2

    def test_invalid_json_exit_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        result = self._run("deviate", "--config", str(bad))
        assert result.returncode == 2

    def test_missing_config_exit_three(self, tmp_path):
        result = self._run("deviate", "--config", str(tmp_path / "absent.json"))
        assert result.returncode == 3

    def test_unwritable_output_exit_three(self, tmp_path):
        cfg = self._write_config(tmp_path)
        result = self._run(
            "deviate", "--config", str(cfg), "--out", str(tmp_path / "no_dir" / "x.csv")
        )
        assert result.returncode == 3

    def test_flag_overrides(self, tmp_path):
        cfg = self._write_config(tmp_path)
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        r1 = self._run("deviate", "--config", str(cfg), "--out", str(out1), "--seed", "7")
        r2 = self._run("deviate", "--config", str(cfg), "--out", str(out2), "--seed", "7",
                       "--workers", "3")
        assert r1.returncode == 0 and r2.returncode == 0
        assert out1.read_bytes() == out2.read_bytes()
