"""Experiment harness, sweeps, config parsing, and the CLI."""

import json
import math

import numpy as np
import pytest

import ssqlab as s
from ssqlab.cli import main
from ssqlab.harness import (
    CSV_HEADER,
    SWEEP_FAMILIES,
    ExperimentConfig,
    format_report,
    resolve_family,
    run_martingale,
    run_sweep,
)


class TestResolveFamily:
    def test_family_a(self):
        spec = resolve_family("a", 6.0)
        assert spec.lam == (6.0, 14.0)
        assert spec.mu == (20.0, 20.0)

    def test_family_b_symmetric_anchor(self):
        spec = resolve_family("b", 20.0)
        assert spec.mu[1] == pytest.approx(20.0, rel=1e-12)

    def test_family_c_keeps_ratio(self):
        spec = resolve_family("c", 7.0)
        assert spec.mu[0] == 14.0
        assert spec.lam[0] / spec.mu[0] == 0.5

    def test_family_d_tie_break(self):
        spec = resolve_family("d", 0.3)
        assert spec.tie_break.vector(frozenset({0, 1}), 2) == (0.3, 0.7)

    def test_every_default_grid_point_is_critical(self):
        for fam, grid in SWEEP_FAMILIES.items():
            for v in grid:
                report = s.validate(resolve_family(fam, v))
                assert report.ok
                assert abs(report.residual) <= 1e-12

    def test_infeasible_values(self):
        with pytest.raises(s.InfeasiblePoint):
            resolve_family("a", 20.0)
        with pytest.raises(s.InfeasiblePoint):
            resolve_family("b", 10.0)
        with pytest.raises(s.InfeasiblePoint):
            resolve_family("d", 1.5)


class TestRunSweep:
    def config(self, **kw):
        base = dict(experiment="sweep-fig2d", family="d", r=5.0, eps=1.0,
                    kappa0=0.25, n=120, base_seed=90, workers=1,
                    grid=(0.2, 0.5, 0.8))
        base.update(kw)
        return ExperimentConfig(**base)

    def test_csv_schema(self):
        points, csv_text = run_sweep(self.config())
        lines = csv_text.strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 4
        assert len(points) == 3
        row = lines[1].split(",")
        assert row[0] == "p1"
        assert float(row[1]) == 0.2

    def test_worker_count_does_not_change_bytes(self):
        _, csv1 = run_sweep(self.config(workers=1))
        _, csv2 = run_sweep(self.config(workers=3))
        assert csv1 == csv2

    def test_infeasible_point_becomes_warning_row(self):
        points, csv_text = run_sweep(self.config(family="a",
                                                 experiment="sweep-fig2a",
                                                 grid=(10.0, 25.0)))
        assert points[1].warning is not None
        assert "nan" in csv_text.strip().split("\n")[2]

    def test_symmetric_anchor_value(self):
        points, _ = run_sweep(self.config(n=300))
        mid = points[1]  # p1 = 0.5
        assert abs(mid.estimate.q_hat[0] - 0.5) <= 3.0 * math.sqrt(0.25 / 300)

    def test_resolved_specs_revalidate(self):
        points, _ = run_sweep(self.config())
        for p in points:
            assert abs(s.validate(p.spec).residual) <= 1e-12


class TestExperimentConfig:
    def test_json_round_trip(self):
        doc = {"experiment": "estimate-q", "r": 5.0, "n": 200, "base_seed": 7}
        cfg = ExperimentConfig.from_json(json.dumps(doc))
        assert cfg.r == 5.0
        assert cfg.n == 200

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="unknown config"):
            ExperimentConfig.from_json('{"experiment": "estimate-q", "bogus": 1}')

    def test_embedded_model(self):
        doc = {"experiment": "estimate-q",
               "model": json.loads(s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0)).to_json())}
        cfg = ExperimentConfig.from_json(json.dumps(doc))
        assert cfg.model.lam == (10.0, 10.0)

    def test_sweep_name_sets_family(self):
        cfg = ExperimentConfig(experiment="sweep-fig2b")
        assert cfg.family == "b"

    def test_positive_knobs(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="estimate-q", n=0)


class TestMartingaleRunner:
    def test_stopped_mean_stays_put(self):
        spec = s.ModelSpec(lam=(1.0, 1.0), mu=(2.0, 2.0))
        init = s.StateVector(np.array([4, 2]))
        doc = run_martingale(spec, 12.0, init, 400, 91)
        assert doc["values"]["pass"]
        assert doc["values"]["gap"] <= 3.0 * doc["values"]["se"]


class TestSelftest:
    def test_subset_runs_and_reports_ids(self):
        results = s.selftest(4321, only=["A3", "A7", "A9"])
        assert [r.cid for r in results] == ["A3", "A7", "A9"]
        assert all(r.passed for r in results)

    def test_deterministic_values(self):
        a = s.selftest(4321, only=["A3", "A7"])
        b = s.selftest(4321, only=["A3", "A7"])
        assert [r.details for r in a] == [r.details for r in b]

    def test_report_format(self):
        results = s.selftest(4321, only=["A7"])
        text = format_report(results)
        assert "A7" in text
        assert "PASS" in text or "FAIL" in text

    def test_full_report_covers_every_criterion(self):
        from ssqlab.acceptance import CRITERIA

        results = s.selftest(4321, scale=0.02)
        assert [r.cid for r in results] == list(CRITERIA)


class TestCli:
    def model_file(self, tmp_path, spec):
        path = tmp_path / "model.json"
        path.write_text(spec.to_json())
        return str(path)

    def test_validate_ok(self, tmp_path, capsys):
        path = self.model_file(tmp_path, s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0)))
        assert main(["validate", "--config", path]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["ok"]

    def test_validate_noncritical_exit_code(self, tmp_path, capsys):
        path = self.model_file(tmp_path, s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 30.0)))
        assert main(["validate", "--config", path]) == 1

    def test_estimate_q_json(self, capsys):
        assert main(["estimate-q", "--n", "120", "--r", "5", "--seed", "9"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["estimator"] == "estimate_q"
        assert doc["n"] == 120
        assert len(doc["values"]["q_hat"]) == 2

    def test_simulate_csv_dump(self, tmp_path, capsys):
        out = tmp_path / "path.csv"
        assert main(["simulate", "--horizon", "0.05", "--r", "5",
                     "--out", str(out)]) == 0
        assert out.read_text().startswith("t,class,kind,Q1,Q2")

    def test_sweep_writes_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--family", "d", "--n", "120", "--r", "5",
                     "--out", str(out), "--seed", "3"]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 10

    def test_wbm_sim_csv(self, tmp_path):
        out = tmp_path / "wbm.csv"
        assert main(["wbm-sim", "--q", "0.3", "0.7", "--horizon", "0.5",
                     "--dt", "0.001", "--out", str(out)]) == 0
        assert out.read_text().startswith("t,v1,v2")

    def test_selftest_subset_exit_zero(self, capsys):
        assert main(["selftest", "--only", "A7", "--seed", "11"]) == 0
        assert "A7" in capsys.readouterr().out

    def test_bad_config_returns_one(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"lambda": [1], "mu": [1]}')
        assert main(["validate", "--config", str(path)]) == 1

    def test_dyadic_json(self, capsys):
        assert main(["dyadic", "--r-list", "5", "10", "--n", "120",
                     "--seed", "5"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["values"]) == 1

    def test_csv_append(self, tmp_path, capsys):
        dest = tmp_path / "results.csv"
        for seed in ("1", "2"):
            assert main(["estimate-q", "--n", "120", "--r", "5",
                         "--seed", seed, "--csv", str(dest)]) == 0
        capsys.readouterr()
        lines = dest.read_text().strip().split("\n")
        assert lines[0].startswith("estimator,seed,n,params,values,ci")
        assert len(lines) == 3
