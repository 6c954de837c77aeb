import hashlib
import json
import os
from pathlib import Path

import pytest

from baflow.cli import main


def run(tmp_path, *argv):
    out = tmp_path / "out"
    return main(["--output-dir", str(out), *argv]), out


def digest_dir(path: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(path.iterdir())
    }


def test_flow_command(tmp_path):
    code, out = run(tmp_path, "flow", "--model", "two-point", "--alpha", "0.5",
                    "--beta-d", "2.0", "--t-max", "5.0", "--q0", "corner")
    assert code == 0
    assert (out / "trajectory.csv").exists()
    assert (out / "flow_report.json").exists()
    assert (out / "flow_diagnostics.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    for name, checksum in manifest["files"].items():
        actual = hashlib.sha256((out / name).read_bytes()).hexdigest()
        assert actual == checksum, name


def test_fixed_point_command(tmp_path):
    code, out = run(tmp_path, "fixed-point", "--model", "two-point",
                    "--alpha", "0.7", "--beta-d", "2.0")
    assert code == 0
    payload = json.loads((out / "fixed_point.json").read_text())
    assert payload["dual_residual"] <= 1e-12
    assert payload["q_star"][0] == pytest.approx(0.7626070570998272, abs=1e-9)


def test_dissipation_check_command(tmp_path):
    code, out = run(tmp_path, "dissipation-check", "--model", "two-point",
                    "--beta-d", "2.0", "--dt", "1e-3")
    assert code == 0
    payload = json.loads((out / "dissipation_report.json").read_text())
    assert payload["max_abs_err"] <= 1e-5
    assert payload["halving_ratio"] >= 3.5


def test_spectrum_command(tmp_path):
    code, out = run(tmp_path, "spectrum", "--model", "three-cluster", "--m", "5",
                    "--delta", "3.0", "--beta", "2.0",
                    "--weights", "0.5", "0.3", "0.2", "--q0", "uniform")
    assert code == 0
    payload = json.loads((out / "spectrum.json").read_text())
    assert payload["gram"]["zero_mode_count"] == 12


def test_fr_compare_command(tmp_path):
    code, out = run(tmp_path, "fr-compare", "--betas", "1", "10")
    assert code == 0
    payload = json.loads((out / "fr_compare.json").read_text())
    assert payload["max_abs_err"] <= 1e-5


def test_gaussian_spectrum_command(tmp_path):
    code, out = run(tmp_path, "gaussian", "spectrum", "--sigma2", "1",
                    "--beta", "1", "--n", "4")
    assert code == 0
    payload = json.loads((out / "hermite_spectrum.json").read_text())
    assert payload["alpha"] == pytest.approx(0.5)
    assert payload["mode_rates"] == pytest.approx([0.5, 0.25, 0.125, 0.0625])


def test_gaussian_phase_command(tmp_path):
    code, out = run(tmp_path, "gaussian", "phase", "--betas", "0.75", "1", "2", "4")
    assert code == 0
    text = (out / "phase_portrait.csv").read_text().splitlines()
    assert text[0] == "beta,s,field"
    assert len(text) > 100


def test_model_two_scale_command(tmp_path):
    code, out = run(tmp_path, "model", "two-scale", "--t-max", "30")
    assert code == 0
    payload = json.loads((out / "two_scale.json").read_text())
    assert payload["fitted_rate"] == pytest.approx(payload["fd_min_rate"], rel=0.1)
    assert payload["fitted_rate"] >= payload["bound_rate_quarter_gap"]


def test_mimo_command(tmp_path):
    code, out = run(tmp_path, "mimo", "--gains", "1.0", "0.5", "--points", "5",
                    "--p-min", "1", "--p-max", "3")
    assert code == 0
    assert (out / "allocation.csv").exists()
    payload = json.loads((out / "mimo.json").read_text())
    assert payload["stiffness_ratio_at_pmax"] == pytest.approx(2.5)


def test_wz_command_bits_units(tmp_path):
    code, out = run(tmp_path, "--units", "bits", "wz", "--rhos", "0.0", "0.8660254037844386")
    assert code == 0
    rows = (out / "rate_gap.csv").read_text().splitlines()[1:]
    gaps = {float(r.split(",")[0]): float(r.split(",")[1]) for r in rows}
    assert gaps[0.8660254037844386] == pytest.approx(1.0, abs=1e-12)  # ln2 nats = 1 bit


def test_units_flag_converts_free_energy(tmp_path):
    import numpy as np

    _, out_nats = run(tmp_path / "a", "fixed-point", "--model", "two-point")
    _, out_bits = run(tmp_path / "b", "--units", "bits", "fixed-point",
                      "--model", "two-point")
    nats = json.loads((out_nats / "fixed_point.json").read_text())["free_energy"]
    bits = json.loads((out_bits / "fixed_point.json").read_text())["free_energy"]
    assert bits == pytest.approx(nats / np.log(2.0), rel=1e-12)


def test_verify_all_single_criterion(tmp_path, capsys):
    code, out = run(tmp_path, "verify-all", "--criterion", "2")
    assert code == 0
    captured = capsys.readouterr()
    assert "[PASS] criterion  2" in captured.out
    payload = json.loads((out / "acceptance.json").read_text())
    assert payload["results"][0]["passed"] is True


def test_verify_all_defect_criterion_exits_2(tmp_path, capsys):
    code, out = run(tmp_path, "verify-all", "--criterion", "5")
    assert code == 2
    captured = capsys.readouterr()
    assert "[FAIL] criterion  5" in captured.out
    assert "documented defects" in captured.err


def test_determinism_byte_identical(tmp_path):
    code_a, out_a = run(tmp_path / "a", "--seed", "42", "model", "two-scale",
                        "--t-max", "20")
    code_b, out_b = run(tmp_path / "b", "--seed", "42", "model", "two-scale",
                        "--t-max", "20")
    assert code_a == code_b == 0
    assert digest_dir(out_a) == digest_dir(out_b)


def test_exit_code_validation_error(tmp_path):
    code, _ = run(tmp_path, "flow", "--model", "unknown-model")
    assert code == 1
    code, _ = run(tmp_path, "flow", "--dt", "-1")
    assert code == 1


def test_exit_code_io_error(tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("not a directory")
    code = main(["--output-dir", str(blocker), "fixed-point", "--model", "two-point"])
    assert code == 3


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 0.7, "beta_d": 2.0, "tol": 1e-10}))
    code, out = run(tmp_path, "--config", str(cfg), "fixed-point",
                    "--model", "two-point", "--alpha", "0.6")
    assert code == 0
    payload = json.loads((out / "fixed_point.json").read_text())
    # flag overrides the file for alpha; beta_d comes from the file
    assert payload["model"]["alpha"] == 0.6
    assert payload["model"]["beta_d"] == 2.0


def test_no_figures_flag(tmp_path):
    code, out = run(tmp_path, "--no-figures", "fixed-point", "--model", "two-point")
    assert code == 0
    assert not list(out.glob("*.png"))


def test_output_dir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("BAFLOW_OUTPUT_DIR", str(tmp_path / "env_out"))
    monkeypatch.chdir(tmp_path)
    assert main(["fixed-point", "--model", "two-point"]) == 0
    assert (tmp_path / "env_out" / "fixed_point.json").exists()


def test_format_json_emits_row_objects(tmp_path):
    code, out = run(tmp_path, "--format", "json", "fixed-point", "--model", "two-point")
    assert code == 0
    assert not (out / "fixed_point.csv").exists()
    report = json.loads((out / "fixed_point.json").read_text())
    assert "q_star" in report  # the report keeps its stem
    table = json.loads((out / "fixed_point_table.json").read_text())
    assert table["columns"] == ["index", "q_star"]
    assert len(table["rows"]) == 2
