import json
import math
import os
import sys

import numpy as np
import pytest

from akpck.bench import (
    analytic_problem, build_problem, compute_truth, find_truth, g1, g2,
    ground_truth_beta, load_truth, run_id_for, run_seed_for, run_study,
)
from akpck.config import parse_config
from akpck.errors import UnsupportedOracleError
from akpck.probspace import stream_rng


class TestClosedForms:
    def test_g1_zero_product_point(self):
        assert g1(0.0, 1.0) == 2.0

    def test_g1_constructed_root(self):
        # sin(0) + 2 - 4 * 10 / 20 = 0
        assert g1(0.0, 11.0) == 0.0

    def test_g1_at_input_means(self):
        assert float(g1(1.5, 2.5)) == pytest.approx(0.9596886812576563, rel=1e-14)

    def test_g2_vanishing_terms(self):
        assert g2(0.0, -1.0) == -0.5

    def test_g2_constructed_root(self):
        assert g2(0.0, 1.5) == 0.0

    def test_g2_at_input_means(self):
        assert float(g2(1.5, 2.5)) == pytest.approx(0.7348700080598672, rel=1e-14)

    def test_matches_independent_symbolic_evaluation(self):
        rng = stream_rng(1, "closed-form-check")
        x1 = rng.normal(1.5, 1.0, 10 ** 4)
        x2 = rng.normal(2.5, 1.0, 10 ** 4)
        ref1 = np.sin(5.0 * x1 / 2.0) + 2.0 - (x1 ** 2 + 4.0) * (x2 - 1.0) / 20.0
        ref2 = np.sin(2.0 * x1) - 1.0 / 2.0 + (x1 ** 2 + 4.0) * (x2 + 1.0) / 20.0
        np.testing.assert_allclose(g1(x1, x2), ref1, rtol=1e-12)
        np.testing.assert_allclose(g2(x1, x2), ref2, rtol=1e-12)

    def test_problem_wiring(self):
        prob = analytic_problem()
        pts = np.array([[1.5, 2.5], [0.0, 11.0]])
        np.testing.assert_allclose(prob.limit_states[0](pts), g1(pts[:, 0], pts[:, 1]))
        np.testing.assert_allclose(prob.limit_states[1](pts), g2(pts[:, 0], pts[:, 1]))


class TestGroundTruth:
    def test_minimum_size_guard(self):
        with pytest.raises(ValueError):
            ground_truth_beta(analytic_problem(), 1, 10 ** 3, 1)

    def test_cached_and_reused(self, tmp_path):
        prob = analytic_problem()
        a = ground_truth_beta(prob, 1, 10 ** 6, 5, cache_dir=tmp_path)
        cache = load_truth(tmp_path, prob.name, 10 ** 6, 5)
        assert cache["g1"]["p_hat"] == a.p_hat
        b = ground_truth_beta(prob, 1, 10 ** 6, 5, cache_dir=tmp_path)
        assert b == a

    def test_disjoint_seeds_agree(self, tmp_path):
        prob = analytic_problem()
        a = ground_truth_beta(prob, 2, 10 ** 6, 11, cache_dir=tmp_path)
        b = ground_truth_beta(prob, 2, 10 ** 6, 12, cache_dir=tmp_path)
        assert abs(a.p_hat - b.p_hat) <= 3.0 * (a.std_err + b.std_err)

    def test_frozen_reference_reverifies(self, tmp_path):
        # repository truth artifact stays consistent with a fresh oracle run
        from importlib.resources import files

        frozen = json.loads(files("akpck.data").joinpath("analytic_truth.json")
                            .read_text())
        prob = analytic_problem()
        for j, name in ((1, "g1"), (2, "g2")):
            fresh = ground_truth_beta(prob, j, 10 ** 6, 2024, cache_dir=tmp_path)
            ref = frozen["entries"][name]
            assert abs(fresh.p_hat - ref["p_hat"]) <= 3.0 * (fresh.std_err + ref["se"])

    def test_external_problem_has_no_oracle(self):
        spec = parse_config(_mock_config_dict(kind="external")).problem
        with pytest.raises(UnsupportedOracleError):
            build_problem(spec, for_truth=True)

    def test_mock_problem_truth_uses_closed_form(self, tmp_path):
        spec = parse_config(_mock_config_dict()).problem
        with build_problem(spec, for_truth=True) as prob:
            assert prob.adapter is None
            entries = compute_truth(prob, 10 ** 6, 3, cache_dir=tmp_path)
        assert set(entries) == {"g_F", "g_d"}
        assert entries["g_F"]["p_hat"] < entries["g_d"]["p_hat"]


def _mock_config_dict(kind="mock", **overrides):
    cfg = {
        "problem": {
            "kind": kind,
            "input": {"names": ["v_s", "rho0"], "mu": [3.0, 317.0],
                      "sigma": [0.6, 30.0]},
            "limit_states": [{"name": "g_F", "threshold": 3.0},
                             {"name": "g_d", "threshold": 2.0}],
            "timeout": 60.0,
        },
        "strategies": ["alternate", "convergence-guided"],
        "metrics": ["U-LOO"],
        "budget": 14,
        "n_init": 8,
        "pool_size": 2000,
        "replications": 2,
        "base_seed": 99,
    }
    if kind == "external":
        cfg["problem"]["command"] = [sys.executable, "-m", "akpck.mock_adapter"]
    cfg.update(overrides)
    return cfg


class TestRunStudy:
    def test_analytic_study_files_and_report(self, tmp_path):
        cfg = parse_config({
            "problem": {"kind": "analytic"},
            "strategies": ["alternate"],
            "metrics": ["U"],
            "budget": 14, "n_init": 8, "pool_size": 2000,
            "replications": 2, "base_seed": 4242,
        })
        out = tmp_path / "study"
        report = run_study(cfg, out, jobs=1, truth_n=10 ** 6, truth_seed=5)
        for rep in range(2):
            rid = run_id_for("alternate", "U", rep)
            assert (out / "records" / f"{rid}.csv").exists()
            assert (out / "records" / f"{rid}.meta.json").exists()
            assert (out / "records" / f"{rid}.models.json").exists()
            assert (out / "checkpoints" / f"{rid}.json").exists()
        assert (out / "report.txt").exists()
        assert (out / "report.csv").exists()
        assert (out / "boxplot_stats.csv").exists()
        assert (out / "figures" / "evolution_U.png").exists()
        assert (out / "figures" / "error_boxplot.png").exists()
        row = report.rows[0]
        assert row["n_runs"] == 2
        assert row["eps_beta"]["mean"] >= 0.0

    def test_rerun_is_bit_identical(self, tmp_path):
        cfg = parse_config({
            "problem": {"kind": "analytic"},
            "strategies": ["single:1"], "metrics": ["U"],
            "budget": 13, "n_init": 8, "pool_size": 1500,
            "replications": 1, "base_seed": 7,
        })
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_study(cfg, out_a, jobs=1, truth_n=10 ** 6, truth_seed=5)
        run_study(cfg, out_b, jobs=1, truth_n=10 ** 6, truth_seed=5)
        for name in ("report.csv", "report.txt", "boxplot_stats.csv",
                     "evolution_bands_single1_U.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        rid = run_id_for("single:1", "U", 0)
        assert ((out_a / "records" / f"{rid}.models.json").read_bytes()
                == (out_b / "records" / f"{rid}.models.json").read_bytes())

    def test_resume_skips_completed_runs(self, tmp_path):
        cfg = parse_config({
            "problem": {"kind": "analytic"},
            "strategies": ["alternate"], "metrics": ["U"],
            "budget": 12, "n_init": 8, "pool_size": 1000,
            "replications": 1, "base_seed": 8,
        })
        out = tmp_path / "study"
        run_study(cfg, out, jobs=1, truth_n=10 ** 6, truth_seed=5)
        rid = run_id_for("alternate", "U", 0)
        marker = (out / "records" / f"{rid}.csv").stat().st_mtime_ns
        report = run_study(cfg, out, jobs=1, resume=True,
                           truth_n=10 ** 6, truth_seed=5)
        assert (out / "records" / f"{rid}.csv").stat().st_mtime_ns == marker
        assert report.rows[0]["n_runs"] == 1

    def test_mock_study_shares_adapter_readings(self, tmp_path):
        cfg = parse_config(_mock_config_dict(strategies=["alternate"],
                                             replications=1))
        out = tmp_path / "study"
        report = run_study(cfg, out, jobs=1)
        run = report.runs[0]
        assert run["adapter_calls"] == cfg.budget
        assert run["adapter_cache_hits"] == cfg.budget
        assert report.truth is not None   # mock problems have a usable oracle

    def test_run_seed_shared_between_metrics(self):
        assert run_seed_for(1, "alternate", 3) == run_seed_for(1, "alternate", 3)
        assert run_seed_for(1, "alternate", 3) != run_seed_for(1, "alternate", 4)
        assert run_seed_for(1, "alternate", 3) != run_seed_for(1, "single:1", 3)
