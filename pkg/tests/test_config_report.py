import json

import pytest

from whiskertwin.experiment.config import ConfigError, config_from_dict, default_config, load_config
from whiskertwin.experiment.report import ExperimentReport, Metric, compare_to_targets


def test_defaults():
    cfg = default_config("static_sweep", seed=5)
    assert cfg.trials == 10 and cfg.seed == 5 and cfg.protocol.f_max_N == 0.18
    assert cfg.calibration.K_ohm_per_N[0] == [483.63, -10.34]


def test_unknown_key_names_path():
    with pytest.raises(ConfigError, match=r"^calibration\.R0_ohmz: unknown key"):
        config_from_dict({"seed": 1, "calibration": {"R0_ohmz": 1}}, "static_sweep")
    with pytest.raises(ConfigError, match=r"^protocol\.cycle: unknown key"):
        config_from_dict({"seed": 1, "protocol": {"cycle": 3}}, "fatigue")
    with pytest.raises(ConfigError, match=r"^colour: unknown key"):
        config_from_dict({"seed": 1, "colour": 3}, "fatigue")


def test_type_errors_name_path():
    with pytest.raises(ConfigError, match=r"^dsp\.window_s: expected a number"):
        config_from_dict({"seed": 1, "dsp": {"window_s": "ten"}}, "freq_sweep")
    with pytest.raises(ConfigError, match=r"^trials: expected an integer"):
        config_from_dict({"seed": 1, "trials": 2.5}, "freq_sweep")
    with pytest.raises(ConfigError, match=r"^protocol\.drive"):
        config_from_dict({"seed": 1, "protocol": {"drive": "vertical"}}, "freq_sweep")
    with pytest.raises(ConfigError, match=r"^calibration\.K_ohm_per_N"):
        config_from_dict({"seed": 1, "calibration": {"K_ohm_per_N": [[1, 2]]}}, "static_sweep")


def test_seed_and_kind_rules():
    with pytest.raises(ConfigError, match="^seed: required"):
        config_from_dict({}, "static_sweep")
    with pytest.raises(ConfigError, match="^experiment"):
        config_from_dict({"seed": 1})
    with pytest.raises(ConfigError, match="requested"):
        config_from_dict({"seed": 1, "experiment": "fatigue"}, "static_sweep")
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict({"seed": 1, "schema_version": 99}, "fatigue")
    with pytest.raises(ConfigError, match="trials"):
        config_from_dict({"seed": 1, "trials": 0}, "fatigue")
    assert config_from_dict({"seed": 1}, "fatigue", seed=9).seed == 9


def test_digest_stable_and_sensitive():
    a = default_config("fatigue", seed=1)
    assert a.digest() == default_config("fatigue", seed=1).digest()
    assert a.digest() != default_config("fatigue", seed=2).digest()
    assert len(a.digest()) == 64


def test_load_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "experiment": "localize", "seed": 3, "protocol": {"n_points": 5}}))
    cfg = load_config(p)
    assert cfg.experiment == "localize" and cfg.protocol.n_points == 5
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)


def _report(*metrics):
    return ExperimentReport("static_sweep", "d" * 64, 1, list(metrics), ["a.csv"])


def test_compare_all_at_target():
    s = compare_to_targets(_report(Metric("slope", 483.63, 483.63, 0.005), Metric("r2", 0.9999, 0.999, None, "ge")))
    assert s.exit_code == 0 and not s.failed


def test_compare_names_failing_metric():
    s = compare_to_targets(_report(Metric("slope_ch1", 483.63 * 1.05, 483.63, 0.005)))
    assert s.exit_code == 1 and s.failed == ["slope_ch1"]
    assert any(l.startswith("FAIL slope_ch1") for l in s.lines)


def test_informational_never_fails():
    s = compare_to_targets(_report(Metric("x", 1e9, informational=True), Metric("y", 1.0, 1.0, 0.0, "abs")))
    assert s.exit_code == 0


def test_tolerance_table_override():
    rep = _report(Metric("slope", 490.0, 483.63, 0.005))
    assert compare_to_targets(rep).exit_code == 1
    assert compare_to_targets(rep, {"slope": {"tolerance": 0.05}}).exit_code == 0


def test_metric_modes_and_validation():
    assert Metric("r", 45.0, [40, 50], None, "range").passed
    assert not Metric("r", 55.0, [40, 50], None, "range").passed
    assert Metric("e", True, True, None, "eq").passed
    assert not Metric("n", float("nan"), 1.0, 0.1, "abs").passed
    with pytest.raises(ValueError):
        Metric("m", 1.0)
    with pytest.raises(ValueError):
        Metric("m", 1.0, 1.0, None, "rel")
    with pytest.raises(ValueError):
        compare_to_targets(_report())


def test_report_json_round_trip(tmp_path):
    rep = _report(Metric("slope", 483.6, 483.63, 0.005), Metric("range", float("inf"), informational=True))
    path = rep.write(tmp_path / "r.json")
    d = json.loads(path.read_text())
    assert set(d) >= {"schema_version", "config_digest", "metrics", "artifacts"}
    assert set(d["metrics"][0]) >= {"name", "value", "target", "tolerance", "pass", "informational"}
    back = ExperimentReport.read(path)
    assert back.metric("slope").passed and back.metric("range").value == float("inf")
    assert "generated_at" not in rep.to_dict(timestamp=False)
