"""Scenario configuration: JSON with a versioned schema, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .. import defaults
from ..sensor_model import DEFAULT_K, NOISE_SIGMA_R, NOMINAL_R0, STATIC_GAIN, UNDERWATER_GAIN

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "static_sweep",
    "fatigue",
    "freq_sweep",
    "longitudinal_sweep",
    "transverse_sweep",
    "localize",
    "fit_defaults",
    "simulate",
)


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""


@dataclass(frozen=True)
class SourceConfig:
    sphere_radius_m: float = defaults.SPHERE_RADIUS
    velocity_amplitude_mps: float = defaults.VELOCITY_AMPLITUDE
    frequency_hz: float = defaults.DRIVE_FREQUENCY
    phase_rad: float = 0.0


@dataclass(frozen=True)
class GeometryConfig:
    length_m: float = 0.100
    diameter_m: float = 0.005
    sensing_point_offset_m: float | None = None


@dataclass(frozen=True)
class CalibrationConfig:
    R0_ohm: float = NOMINAL_R0
    K_ohm_per_N: list = field(default_factory=lambda: DEFAULT_K.tolist())
    sigma_R_ohm: float = NOISE_SIGMA_R


@dataclass(frozen=True)
class ReadoutConfig:
    excitation_V: float = 5.0
    static_gain: float = STATIC_GAIN
    underwater_gain: float = UNDERWATER_GAIN
    sample_rate_hz: float = 6250.0
    fatigue_sample_rate_hz: float = 100.0
    adc_saturation_V: float = 10.0


@dataclass(frozen=True)
class DragConfig:
    linear_drag_gain: float = defaults.DRAG_GAIN
    cross_coupling: float = defaults.CROSS_COUPLING


@dataclass(frozen=True)
class DspBlock:
    analysis_rate_hz: float = 100.0
    window_s: float = 10.0
    hop_s: float | None = None
    settle_s: float = 1.0
    window: str = "hann"
    search_halfwidth_hz: float = 0.5


@dataclass(frozen=True)
class LocalizationConfig:
    floor_V: float = defaults.FLOOR_V
    threshold_factor: float = 3.0
    grid_step_m: float = 0.0005
    L_min_m: float = 0.005
    L_max_m: float = 0.060
    T_max_m: float = 0.040


@dataclass(frozen=True)
class StaticProtocol:
    f_max_N: float = 0.18
    step_N: float = 0.02


@dataclass(frozen=True)
class FatigueProtocol:
    cycles: int = 10_000
    stroke_hz: float = 1.5
    load_N: float = 0.18
    drift_ppm_per_cycle: list = field(default_factory=lambda: [2.0, 0.0, 1.1, 0.0])
    record: str | None = None       # ingest this record CSV instead of simulating


@dataclass(frozen=True)
class FreqSweepProtocol:
    f_start_hz: float = 1.0
    f_stop_hz: float = 45.0
    f_step_hz: float = 0.5
    offset_max_hz: float = 0.1
    L_m: float = 0.020
    T_m: float = 0.0
    drive: str = "longitudinal"
    duration_s: float = 12.0
    full_band: bool = False          # allow up to 50 Hz at an elevated analysis rate
    full_band_analysis_rate_hz: float = 250.0


@dataclass(frozen=True)
class LongitudinalProtocol:
    L_mm: list = field(default_factory=lambda: [10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0])
    T_m: float = 0.0
    drive: str = "longitudinal"
    duration_s: float = 12.0


@dataclass(frozen=True)
class TransverseProtocol:
    T_mm: list = field(default_factory=lambda: [float(t) for t in range(-30, 31, 5)])
    L_m: float = 0.020
    drive: str = "transverse"
    duration_s: float = 12.0


@dataclass(frozen=True)
class LocalizeProtocol:
    n_points: int = 100
    L_min_m: float = 0.010
    L_max_m: float = 0.040
    T_fraction: float = 0.3
    record: str | None = None        # localise a recorded trial instead


@dataclass(frozen=True)
class FitDefaultsProtocol:
    L_m: float = defaults.ANCHOR_L
    A4_V: float = 1.41
    A1_V: float = 0.56
    range_m: float = 0.045


@dataclass(frozen=True)
class SimulateProtocol:
    L_m: float = 0.020
    T_m: float = 0.0
    drive: str = "longitudinal"
    duration_s: float = 12.0
    ambient_noise_V: float = 0.0


PROTOCOLS = {
    "static_sweep": StaticProtocol,
    "fatigue": FatigueProtocol,
    "freq_sweep": FreqSweepProtocol,
    "longitudinal_sweep": LongitudinalProtocol,
    "transverse_sweep": TransverseProtocol,
    "localize": LocalizeProtocol,
    "fit_defaults": FitDefaultsProtocol,
    "simulate": SimulateProtocol,
}

BLOCKS = {
    "source": SourceConfig,
    "geometry": GeometryConfig,
    "calibration": CalibrationConfig,
    "readout": ReadoutConfig,
    "drag": DragConfig,
    "dsp": DspBlock,
    "localization": LocalizationConfig,
}


@dataclass(frozen=True)
class ScenarioConfig:
    experiment: str
    seed: int
    trials: int = 10
    source: SourceConfig = SourceConfig()
    geometry: GeometryConfig = GeometryConfig()
    calibration: CalibrationConfig = CalibrationConfig()
    readout: ReadoutConfig = ReadoutConfig()
    drag: DragConfig = DragConfig()
    dsp: DspBlock = DspBlock()
    localization: LocalizationConfig = LocalizationConfig()
    protocol: typing.Any = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def _check_value(value, tp, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_value(value, inner[0], path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    return value


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown key (allowed: {', '.join(sorted(names))})")
    kwargs = {k: _check_value(v, hints[k], f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _validate(cfg: ScenarioConfig) -> None:
    if cfg.trials < 1:
        raise ConfigError("trials: must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    p = cfg.protocol
    for name in ("drive",):
        if hasattr(p, name) and getattr(p, name) not in ("longitudinal", "transverse"):
            raise ConfigError(f"protocol.{name}: expected 'longitudinal' or 'transverse', got {getattr(p, name)!r}")
    if cfg.dsp.window not in ("hann", "rect"):
        raise ConfigError(f"dsp.window: expected 'hann' or 'rect', got {cfg.dsp.window!r}")
    if len(cfg.calibration.K_ohm_per_N) != 4 or any(len(r) != 2 for r in cfg.calibration.K_ohm_per_N):
        raise ConfigError("calibration.K_ohm_per_N: expected a 4x2 nested list")
    if isinstance(p, FatigueProtocol) and len(p.drift_ppm_per_cycle) != 4:
        raise ConfigError("protocol.drift_ppm_per_cycle: expected four values (one per channel)")


def config_from_dict(data: dict, experiment: str | None = None, seed: int | None = None) -> ScenarioConfig:
    """Validate and build a config; ``experiment``/``seed`` come from the CLI when given."""
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a JSON object")
    data = dict(data)
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version!r} (this build reads {SCHEMA_VERSION})")
    kind = data.pop("experiment", None)
    if experiment is not None:
        if kind is not None and kind != experiment:
            raise ConfigError(f"experiment: config names {kind!r} but {experiment!r} was requested")
        kind = experiment
    if kind not in PROTOCOLS:
        raise ConfigError(f"experiment: expected one of {', '.join(EXPERIMENTS)}, got {kind!r}")
    file_seed = data.pop("seed", None)
    if seed is None:
        seed = file_seed
    if seed is None:
        raise ConfigError("seed: required for simulated runs")
    seed = _check_value(seed, int, "seed")
    trials = _check_value(data.pop("trials", 10), int, "trials")
    kwargs = {}
    for name, cls in BLOCKS.items():
        if name in data:
            kwargs[name] = _build(cls, data.pop(name), name)
    protocol = _build(PROTOCOLS[kind], data.pop("protocol", {}), "protocol")
    for key in data:
        raise ConfigError(f"{key}: unknown key")
    cfg = ScenarioConfig(kind, seed, trials, protocol=protocol, **kwargs)
    _validate(cfg)
    return cfg


def read_config_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None


def load_config(path, experiment: str | None = None, seed: int | None = None) -> ScenarioConfig:
    return config_from_dict(read_config_json(path), experiment, seed)


def default_config(experiment: str, seed: int = 0, **overrides) -> ScenarioConfig:
    cfg = config_from_dict({}, experiment, seed)
    return cfg.replace(**overrides) if overrides else cfg
