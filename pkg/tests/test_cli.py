import json
import os

import pytest

from seqrank.cli import main, parse_cost
from seqrank.errors import ValidationError

QUICK_STUDY = {
    "k": 3,
    "support": {"kappa": 2.0, "delta": 0.4},
    "c_list": ["2^-5"],
    "baselines": ["uniform", "wald"],
    "reps": 2,
    "tc_samples": 3,
    "design_iterations": 40,
    "standalone_iterations": 100,
    "seed": 7,
    "threads": 1,
}


@pytest.fixture()
def quick_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(QUICK_STUDY))
    return str(path)


class TestParseCost:
    def test_power_notation_exact(self):
        assert parse_cost("2^-5") == 2.0 ** -5
        assert parse_cost("2^-75") == 2.0 ** -75

    def test_plain_float(self):
        assert parse_cost("0.125") == 0.125
        assert parse_cost(0.25) == 0.25

    def test_domain(self):
        with pytest.raises(ValidationError):
            parse_cost("1.5")
        with pytest.raises(ValidationError):
            parse_cost("2^1")


class TestStudy1Command:
    def test_smoke_run_emits_rows(self, quick_config, tmp_path, capsys):
        out = str(tmp_path / "s1")
        code = main(["study1", "--config", quick_config, "--out", out,
                     "--reps", "2", "--c-list", "2^-5"])
        assert code == 0
        lines = open(os.path.join(out, "study1_results.csv")).read().splitlines()
        assert len(lines) == 3  # header + one row per stopping rule
        assert os.path.exists(os.path.join(out, "study1_plotdata.csv"))
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert manifest["command"] == "study1"
        assert manifest["config"]["seed"] == 7

    def test_shipped_config_parses(self, tmp_path):
        # validate and build the spec without running the full grid
        from seqrank.cli import _experiment_spec, load_config
        import argparse
        cfg = load_config("configs/study1.json")
        args = argparse.Namespace(c_list=None, reps=None, seed=None, threads=None)
        spec = _experiment_spec(cfg, args, "study1",
                                policies=(("optimal", "T1"), ("optimal", "T2")))
        assert spec.support_true.kappa == 2.0
        assert spec.support_true.delta == 0.4
        assert spec.c_list[0] == 2.0 ** -5
        assert spec.c_list[-1] == 2.0 ** -75

    def test_shipped_study2_k4_config_is_misspecified(self):
        from seqrank.cli import _experiment_spec, load_config
        import argparse
        cfg = load_config("configs/study2_k4.json")
        args = argparse.Namespace(c_list=None, reps=None, seed=None, threads=None)
        spec = _experiment_spec(cfg, args, "study2",
                                policies=(("optimal", "T1"), ("optimal", "T2")))
        assert spec.support_true.delta == 0.2
        assert spec.policy_support.misspecified
        assert spec.policy_support.kappa == 5.0
        assert spec.policy_support.effective_delta == 0.0

    def test_invalid_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"k": 3, "support": {"kappa": -1.0}}))
        assert main(["study1", "--config", str(bad), "--out",
                     str(tmp_path / "o")]) == 2


class TestStudy2Command:
    def test_smoke_with_matched_baselines(self, quick_config, tmp_path):
        out = str(tmp_path / "s2")
        code = main(["study2", "--config", quick_config, "--out", out])
        assert code == 0
        lines = open(os.path.join(out, "study2_results.csv")).read().splitlines()
        header = lines[0].split(",")
        rows = [dict(zip(header, l.split(","))) for l in lines[1:]]
        selections = {r["selection"] for r in rows}
        assert selections == {"optimal", "uniform", "wald"}
        fixed_rows = [r for r in rows if r["stopping"] == "fixed"]
        assert fixed_rows and all(r["fixed_N"] for r in fixed_rows)


class TestSolveDesignCommand:
    def test_two_item_design(self, capsys):
        code = main(["solve-design", "--theta", "0,-0.8473", "--kappa", "2",
                     "--delta", "0.4", "--iters", "400", "--c-list", "2^-15"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["lambda"]["(1, 2)"] == pytest.approx(1.0, abs=1e-9)
        assert doc["value"] == pytest.approx(0.18215, abs=2e-4)
        assert doc["t_c"]["3.05175781e-05"] == pytest.approx(57.08, abs=0.1)

    def test_box_violation_exits_2(self, capsys):
        code = main(["solve-design", "--theta", "0,3.0", "--kappa", "2",
                     "--delta", "0.4"])
        assert code == 2
        assert "kappa" in capsys.readouterr().err

    def test_repeated_output_identical(self, capsys):
        argv = ["solve-design", "--theta", "0,1,-1", "--kappa", "2",
                "--delta", "0.4", "--iters", "300"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        assert capsys.readouterr().out == first


class TestSingleTrialCommand:
    def test_fixed_length_trajectory(self, quick_config, tmp_path, capsys):
        out = str(tmp_path / "trial")
        code = main(["single-trial", "--config", quick_config, "--out", out,
                     "--selection", "uniform", "--stopping", "fixed",
                     "--fixed-length", "6", "--c", "2^-5"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["stopping_time"] == 6
        records = [json.loads(l) for l in
                   open(os.path.join(out, "trajectory.jsonl"))]
        assert len(records) == 6
        assert records[0]["step"] == 1

    def test_deterministic_given_seed(self, quick_config, capsys):
        argv = ["single-trial", "--config", quick_config, "--seed", "42",
                "--stopping", "T2", "--c", "2^-5"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        assert capsys.readouterr().out == first

    def test_t2_final_record_crosses_threshold(self, quick_config, tmp_path):
        from seqrank.policy import h_of_c
        out = str(tmp_path / "t2")
        code = main(["single-trial", "--config", quick_config, "--out", out,
                     "--stopping", "T2", "--c", "2^-5", "--seed", "3"])
        assert code == 0
        records = [json.loads(l) for l in
                   open(os.path.join(out, "trajectory.jsonl"))]
        assert records[-1]["min_glr"] >= h_of_c(2.0 ** -5, 0.5)


class TestEstimateTcCommand:
    def test_emits_estimates(self, quick_config, capsys):
        code = main(["estimate-tc", "--config", quick_config,
                     "--c-list", "2^-5", "2^-10"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc) == 2
        for entry in doc.values():
            assert entry["e_tc"] > 0
