import json

import pytest

from whiskertwin.experiment.cli import main


def test_calibrate_static_success(tmp_path, capsys):
    assert main(["calibrate-static", "--seed", "1", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS slope_ch1_ohm_per_N" in out
    assert (tmp_path / "static_sweep_report.json").is_file()


def test_quiet(tmp_path, capsys):
    assert main(["fit-defaults", "--seed", "1", "--out", str(tmp_path), "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_usage_errors(tmp_path, capsys):
    assert main(["nonsense"]) == 2
    assert main(["calibrate-static", "--out", str(tmp_path)]) == 2        # no seed
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "readout": {"gain": 3}}))
    assert main(["calibrate-static", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "readout.gain: unknown key" in capsys.readouterr().err
    assert main(["calibrate-static", "--config", str(tmp_path / "missing.json")]) == 2


def test_runtime_error_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,ch1_V\n0,1\n")
    assert main(["localize", "--seed", "1", "--record", str(bad), "--out", str(tmp_path)]) == 3
    assert "expected 4" in capsys.readouterr().err


def test_metric_failure_exit_1(tmp_path):
    cfg = tmp_path / "c.json"
    # a miscalibrated device misses the published slope
    cfg.write_text(json.dumps({"seed": 1, "calibration": {"K_ohm_per_N": [[460, -10.34], [-10.34, 505.365],
                                                                         [-527.1, -3.68], [-3.68, -505.365]]}}))
    assert main(["calibrate-static", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 1


def test_report_subcommand(tmp_path, capsys):
    main(["calibrate-static", "--seed", "1", "--out", str(tmp_path), "--quiet"])
    rep = tmp_path / "static_sweep_report.json"
    assert main(["report", str(rep)]) == 0
    tol = tmp_path / "tol.json"
    tol.write_text(json.dumps({"slope_ch1_ohm_per_N": {"target": 500.0}}))
    capsys.readouterr()
    assert main(["report", str(rep), "--tolerances", str(tol)]) == 1
    assert "FAIL slope_ch1_ohm_per_N" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "nope.json")]) == 2


def test_config_file_with_experiment(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "experiment": "localize", "seed": 4, "trials": 1,
                               "protocol": {"n_points": 4}}))
    assert main(["localize", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    assert main(["fatigue", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 2
