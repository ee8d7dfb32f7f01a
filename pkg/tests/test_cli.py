"""Command-line interface: validation, exit codes, outputs, determinism."""

import json

import numpy as np
import pytest

from piezotb.cli import main


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestValidation:
    def test_unknown_model(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "kagome"}))
        code, _, err = run_cli(["chern", "--config", str(cfg)], capsys)
        assert code == 2
        assert "config error" in err

    def test_malformed_region(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"region": [[0, 3], [0, 2], [0, 0]],
                                   "resolution": [5, 5, 1]}))
        code, _, err = run_cli(["gap-map", "--config", str(cfg)], capsys)
        assert code == 2
        assert "admissible box" in err

    def test_unknown_keys_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_kpoints": 12}))
        code, _, _ = run_cli(["chern", "--config", str(cfg)], capsys)
        assert code == 2

    def test_bad_loop_spec(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"loop": {"type": "eta1", "eps": 2.0}}))
        code, _, _ = run_cli(["chern", "--config", str(cfg)], capsys)
        assert code == 2

    def test_no_partial_output_on_validation_failure(self, tmp_path, capsys):
        out = tmp_path / "never.json"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "nope"}))
        code, _, _ = run_cli(["chern", "--config", str(cfg),
                              "--out", str(out)], capsys)
        assert code == 2
        assert not out.exists()


class TestChernCommand:
    def test_eta1_report(self, tmp_path, capsys):
        out = tmp_path / "chern.json"
        code, _, _ = run_cli(["chern", "--n-grid", "48", "--out", str(out)],
                             capsys)
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["matrix"] == [[0, 0, 1], [0, 0, 0], [-1, 0, 0]]
        assert doc["delta_p"] == [1, 0]
        assert doc["delta_p_per_slice"] == [1, 0]
        assert doc["config"]["model"] == "uniaxial"
        assert doc["planes"]["1,3"]["chern"] == 1

    def test_gapless_loop_exits_3(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "loop": {"type": "fourier", "constant": [1.0, 1.0, 0.0],
                     "cos": [[0.2], [0.0], [0.0]]}}))
        code, _, err = run_cli(["chern", "--config", str(cfg)], capsys)
        assert code == 3
        assert "numerical failure" in err


class TestPolarizationCommand:
    def test_quantized_stdout(self, capsys):
        code, out, _ = run_cli(["polarization", "--method", "quantized",
                                "--n-grid", "48"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["delta_p"] == [1.0, 0.0]
        assert doc["residual"] == 0.0
        assert "runtime_ms" not in doc

    def test_riemann_with_eps_override(self, capsys):
        code, out, _ = run_cli(["polarization", "--method", "riemann",
                                "--nk", "32", "--nt", "32", "--eps", "0.3"],
                               capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["config"]["loop"]["eps"] == 0.3
        np.testing.assert_allclose(doc["delta_p"], [1, 0], atol=0.05)

    def test_timings_flag_adds_runtime(self, capsys):
        code, out, _ = run_cli(["polarization", "--method", "quantized",
                                "--n-grid", "32", "--timings"], capsys)
        assert code == 0
        assert "runtime_ms" in json.loads(out)

    def test_determinism_byte_identical(self, tmp_path, capsys):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for p in paths:
            code, _, _ = run_cli(["polarization", "--method", "quantized",
                                  "--n-grid", "32", "--out", str(p)], capsys)
            assert code == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestGapMapCommand:
    def test_row_count_and_summary(self, tmp_path, capsys):
        out = tmp_path / "map.csv"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"resolution": [11, 11, 1], "n_k": 32}))
        code, stdout, _ = run_cli(["gap-map", "--config", str(cfg),
                                   "--out", str(out)], capsys)
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "q1,q2,q3,min_distance,gapped"
        assert len(lines) == 1 + 121
        summary = json.loads(stdout)
        assert summary["rows"] == 121
        assert summary["gapless_cells"] > 0

    def test_stagger_slice_no_gapless(self, tmp_path, capsys):
        out = tmp_path / "map.csv"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"region": [[0, 2], [0, 2], [0.3, 0.3]],
                                   "resolution": [9, 9, 1], "n_k": 32}))
        code, stdout, _ = run_cli(["gap-map", "--config", str(cfg),
                                   "--out", str(out)], capsys)
        assert code == 0
        assert json.loads(stdout)["gapless_cells"] == 0


class TestDisorderCommand:
    def test_sweep_csv(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"lambdas": [0.0, 0.1], "seeds": [1, 2],
                                   "lattice_size": 8, "n_t": 16}))
        code, stdout, _ = run_cli(["disorder", "--config", str(cfg),
                                   "--out", str(out)], capsys)
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "lambda,seed,L,dP1,dP2,residual,min_gap"
        assert len(lines) == 5
        summary = json.loads(stdout)
        assert summary["rows"] == 4 and summary["failed_rows"] == 0

    def test_flag_overrides(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code, stdout, _ = run_cli(
            ["disorder", "--lambda", "0.0", "--disorder-seed", "7",
             "--lattice-size", "6", "--nt", "8", "--out", str(out)], capsys)
        assert code == 0
        assert json.loads(stdout)["rows"] == 1


class TestSymmetryCommand:
    @pytest.mark.parametrize("m,label", [(1, "C"), (2, "AII"), (3, "D"),
                                         (4, "AI")])
    def test_cartan_labels(self, m, label, capsys):
        code, out, _ = run_cli(["symmetry", "--m", str(m)], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["cartan"] == label
        assert doc["relations_passed"] is True

    def test_inversion_report(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"q": [1.0, 1.0, 0.3]}))
        code, out, _ = run_cli(["symmetry", "--config", str(cfg)], capsys)
        assert code == 0
        assert json.loads(out)["inversion"]["symmetric"] is False


class TestLoopInfoCommand:
    def test_reports_gap_and_closure(self, capsys):
        code, out, _ = run_cli(["loop-info", "--eps", "0.5", "--nk", "48"],
                               capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["closure_gap"] < 1e-9
        np.testing.assert_allclose(doc["min_gap"], 0.5, atol=5e-3)
        assert doc["gapped"] is True
