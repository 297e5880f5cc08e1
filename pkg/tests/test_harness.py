"""Experiment runner, file formats, CLI, and determinism."""

import csv
import json

import jsonschema
import numpy as np
import pytest

import bilevel.harness as harness
from bilevel.cli import main as cli_main
from bilevel.harness import (
    SUMMARY_SCHEMA,
    ConfigError,
    ExperimentConfig,
    complexity_at,
    run_experiment,
)
from bilevel.problem import AssumptionViolation


def scalar_config(**overrides):
    cfg = {
        "testbed": {"kind": "scalar1d"},
        "solver": "ba",
        "convexity_class": "strongly_convex",
        "N": 3,
        "seed": 0,
        "x0": [1.0],
        "y0": [0.0],
    }
    cfg.update(overrides)
    return cfg


class TestConfig:
    def test_required_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"solver": "ba"})

    def test_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(scalar_config(bogus=1))

    def test_accelerated_rejects_nonconvex(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(scalar_config(solver="aba",
                                                     convexity_class="nonconvex"))

    def test_stochastic_requires_noise(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(scalar_config(solver="bsa"))

    def test_exact_solver_rejects_noise(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(scalar_config(noise={"sigma_x": 0.1}))

    def test_ensembles_only_for_stochastic(self):
        cfg = scalar_config()
        del cfg["seed"]
        cfg["seeds"] = [0, 1]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(cfg)

    def test_infeasible_x0(self, tmp_path):
        cfg = scalar_config(feasible_set={"kind": "ball", "center": [0.0], "radius": 0.5})
        with pytest.raises(ConfigError):
            run_experiment(cfg, tmp_path)


class TestRunExperiment:
    def test_scalar_trace_and_counters(self, tmp_path):
        run_experiment(scalar_config(), tmp_path)
        with open(tmp_path / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert [r["k"] for r in rows] == ["0", "1", "2"]
        assert rows[-1]["cum_gc_g"] == "6"
        assert list(rows[0]) == ["k", "cum_gc_f", "cum_gc_g", "cum_hc_g",
                                 "f_gap", "grad_norm_sq", "bound_value", "wall_ms"]

    def test_rerun_is_byte_identical(self, tmp_path):
        run_experiment(scalar_config(N=25), tmp_path / "a")
        run_experiment(scalar_config(N=25), tmp_path / "b")
        assert (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()

    def test_bound_file_and_soundness(self, tmp_path):
        run_experiment(scalar_config(N=10), tmp_path)
        with open(tmp_path / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            assert float(r["f_gap"]) <= float(r["bound_value"]) + 1e-12
        with open(tmp_path / "bound.csv") as fh:
            brows = list(csv.DictReader(fh))
        assert len(brows) == 10
        assert brows[0]["N"] == "1"

    def test_summary_validates_against_schema(self, tmp_path):
        summary = run_experiment(scalar_config(), tmp_path)
        jsonschema.validate(summary, SUMMARY_SCHEMA)
        on_disk = json.loads((tmp_path / "summary.json").read_text())
        jsonschema.validate(on_disk, SUMMARY_SCHEMA)
        assert on_disk["final"]["counters"] == {"gc_f": 3, "gc_g": 6, "hc_g": 6}

    def test_surrogate_not_needed_for_testbeds(self, tmp_path):
        summary = run_experiment(scalar_config(), tmp_path)
        assert summary["f_star"]["mode"] == "analytic"

    def test_ensemble_writes_mean_trace(self, tmp_path):
        cfg = scalar_config(solver="bsa", N=8,
                            noise={"sigma_x": 0.1, "sigma_y": 0.1, "sigma_gy": 0.1},
                            feasible_set={"kind": "ball", "center": [0.0], "radius": 2.0})
        del cfg["seed"]
        cfg["seeds"] = list(range(5))
        run_experiment(cfg, tmp_path)
        per_seed = []
        for s in range(5):
            with open(tmp_path / f"seed_{s}/trace.csv") as fh:
                per_seed.append([float(r["f_gap"]) for r in csv.DictReader(fh)])
        per_seed = np.asarray(per_seed)
        with open(tmp_path / "mean_trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        for k, row in enumerate(rows):
            assert float(row["f_gap_mean"]) == pytest.approx(per_seed[:, k].mean(), rel=1e-12)
            expect_se = per_seed[:, k].std(ddof=1) / np.sqrt(5)
            assert float(row["f_gap_stderr"]) == pytest.approx(expect_se, rel=1e-12)

    def test_constrained_reference_when_x_star_outside(self, tmp_path):
        # box that excludes the unconstrained minimizer of the scalar testbed
        cfg = scalar_config(N=5, x0=[1.0],
                            feasible_set={"kind": "box", "lower": [0.5], "upper": [2.0]})
        summary = run_experiment(cfg, tmp_path)
        assert summary["f_star"]["mode"] == "numeric"
        assert summary["f_star"]["value"] == pytest.approx(0.5, rel=1e-6)

    def test_complexity_query(self, tmp_path):
        from bilevel.ba import ba_run, ba_schedule
        from bilevel.problem import FeasibleSet
        from bilevel.testbeds import Scalar1D

        s = Scalar1D()
        tr = ba_run(s.exact_oracle(), FeasibleSet.all_space(), [1.0], [0.0],
                    ba_schedule("strongly_convex", s.constants, 20))
        hit = complexity_at(tr, 1e-3)
        assert hit is not None
        assert tr.f_gap[hit["N"] - 1] <= 1e-3
        assert hit["N"] >= 2 and tr.f_gap[hit["N"] - 2] > 1e-3
        assert complexity_at(tr, 0.0) is None


class TestNumericalFailurePath:
    def test_partial_trace_flushed_with_exit_3(self, tmp_path, monkeypatch, capsys):
        from bilevel.testbeds import Scalar1D

        class Breaks(Scalar1D):
            def __init__(self):
                super().__init__()
                self.calls = 0

            def hess_yy_g(self, x, y):
                self.calls += 1
                if self.calls > 2:
                    return np.array([[-1.0]])
                return super().hess_yy_g(x, y)

        monkeypatch.setattr(harness, "build_testbed", lambda spec: Breaks())
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(scalar_config(N=10)))
        rc = cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
        assert rc == 3
        with open(tmp_path / "out/trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert 0 < len(rows) < 10
        summary = json.loads((tmp_path / "out/summary.json").read_text())
        assert summary["numerical_failure"]

    def test_solver_raises_without_partial_mode(self):
        from bilevel.ba import ba_run, ba_schedule
        from bilevel.problem import FeasibleSet
        from bilevel.testbeds import Scalar1D

        class Breaks(Scalar1D):
            def hess_yy_g(self, x, y):
                return np.array([[-1.0]])

        s = Breaks()
        with pytest.raises(AssumptionViolation):
            ba_run(s.exact_oracle(), FeasibleSet.all_space(), [1.0], [0.0],
                   ba_schedule("strongly_convex", s.constants, 3))


class TestCli:
    def test_run_and_fit_roundtrip(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(scalar_config(N=40)))
        rc = cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
        assert rc == 0
        capsys.readouterr()
        rc = cli_main(["fit", "--trace", str(tmp_path / "out/trace.csv"),
                       "--column", "f_gap", "--window", "5:40"])
        assert rc == 0
        fit = json.loads(capsys.readouterr().out)
        # geometric decay must be flagged as super-polynomial
        assert fit["super_polynomial"] is True

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps(scalar_config(solver="bsa")))
        rc = cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_missing_config_file(self, tmp_path):
        rc = cli_main(["run", "--config", str(tmp_path / "nope.json"),
                       "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_seed_override_changes_stochastic_trace(self, tmp_path):
        cfg = scalar_config(solver="bsa", N=10,
                            noise={"sigma_x": 0.2, "sigma_y": 0.2, "sigma_gy": 0.2},
                            feasible_set={"kind": "ball", "center": [0.0], "radius": 2.0})
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
        cli_main(["run", "--config", str(cfg_path), "--seed", "9", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a/trace.csv").read_bytes() != (tmp_path / "b/trace.csv").read_bytes()

    def test_selftest_passes(self, capsys):
        rc = cli_main(["selftest"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out
