"""Four-channel whisker sensor: load -> resistance -> quarter bridge -> volts.

Transduction is lumped.  A 4x2 sensitivity matrix ``K`` [ohm/N] maps the
in-plane tip force (F1 along e1, F2 along e2) onto the four gauge resistance
changes; channels 1/3 sit on the e1 bending axis and 2/4 on e2.  Beam
mechanics, PDMS coupling and gauge factor are all folded into ``K``.

Underwater loading uses a linear drag gain plus an optional cross-axis
leakage term that acts in quadrature (90 degrees behind the flow), so the
leaked load adds in power rather than in amplitude.

Sign convention: a positive resistance change produces a positive bridge
voltage on every channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .flowfield import DipoleSource, DomainError, FlowSample, envelope_vector

NOMINAL_R0 = 1050.0
NOISE_SIGMA_R = 0.044
STATIC_GAIN = 23.5
UNDERWATER_GAIN = 166.0
DAQ_RATE = 6250.0

# Column 1 measured (e1 loads); column 2 mirrored from it, see ChannelCalibration.
_PRINCIPAL_MEAN = (483.63 + 527.10) / 2.0
DEFAULT_K = np.array(
    [
        [+483.63, -10.34],
        [-10.34, +_PRINCIPAL_MEAN],
        [-527.10, -3.68],
        [-3.68, -_PRINCIPAL_MEAN],
    ]
)

# Channel index -> in-plane axis index (0 = e1, 1 = e2).
PRINCIPAL_AXIS = (0, 1, 0, 1)

RIG_LONGITUDINAL = np.array([1.0, 0.0, 0.0])
RIG_TRANSVERSE = np.array([0.0, 1.0, 0.0])
RIG_VERTICAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class WhiskerGeometry:
    length: float = 0.100
    diameter: float = 0.005
    sensing_point_offset: float | None = None  # None -> tip

    def __post_init__(self):
        if not self.length > 0 or not self.diameter > 0:
            raise ValueError("whisker length and diameter must be > 0")
        if self.sensing_point_offset is None:
            object.__setattr__(self, "sensing_point_offset", self.length)
        if not 0 < self.sensing_point_offset <= self.length:
            raise ValueError("sensing_point_offset must lie in (0, length]")


@dataclass(frozen=True)
class ChannelCalibration:
    """Per-channel baseline, 4x2 sensitivity matrix [ohm/N], resistance noise [ohm].

    Only the e1 column of the default ``K`` was measured (static bending,
    channels 1/3 principal).  The e2 column mirrors it with the mean
    principal magnitude on channels 2/4.
    """

    R0: float = NOMINAL_R0
    K: np.ndarray = field(default_factory=lambda: DEFAULT_K.copy())
    sigma_R: float = NOISE_SIGMA_R

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.shape != (4, 2):
            raise ValueError(f"K must be 4x2, got {K.shape}")
        if not self.R0 > 0:
            raise ValueError("R0 must be > 0")
        if not self.sigma_R >= 0:
            raise ValueError("sigma_R must be >= 0")
        if not (K[0, 0] * K[2, 0] < 0 and K[1, 1] * K[3, 1] < 0):
            raise ValueError("principal sensitivities of opposing gauges must have opposite signs")
        principal = np.abs([K[0, 0], K[2, 0], K[1, 1], K[3, 1]])
        off_axis = np.abs([K[1, 0], K[3, 0], K[0, 1], K[2, 1]])
        if off_axis.max() >= 0.05 * principal.min():
            raise ValueError("off-axis sensitivities must stay below 5% of the smallest principal one")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def principal(self) -> np.ndarray:
        """|K| on each channel's own bending axis."""
        return np.abs(self.K[np.arange(4), list(PRINCIPAL_AXIS)])


@dataclass(frozen=True)
class ReadoutChain:
    excitation_voltage: float = 5.0
    amplifier_gain: float = UNDERWATER_GAIN
    sample_rate: float = DAQ_RATE
    adc_saturation: float = 10.0

    def __post_init__(self):
        for name in ("excitation_voltage", "amplifier_gain", "sample_rate", "adc_saturation"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def small_signal_gain(self, R0: float) -> float:
        """Volts per ohm at the balanced point."""
        return self.amplifier_gain * self.excitation_voltage / (4.0 * R0)

    def check_rate(self, frequency: float) -> None:
        if self.sample_rate < 20.0 * frequency:
            raise ValueError(
                f"sample rate {self.sample_rate} Hz is below 20x the simulated {frequency} Hz"
            )


@dataclass(frozen=True)
class DragModel:
    """Lumped flow -> tip-force transfer.

    ``cross_coupling`` is the fraction of the load on one bending axis that
    leaks onto the other, 90 degrees out of phase.
    """

    linear_drag_gain: float
    cross_coupling: float = 0.0

    def __post_init__(self):
        if not self.linear_drag_gain > 0:
            raise ValueError("linear_drag_gain must be > 0")
        if not self.cross_coupling >= 0:
            raise ValueError("cross_coupling must be >= 0")


@dataclass
class TimeSeriesRecord:
    """Uniformly sampled multi-channel record; ``channels`` has shape (n_channels, n)."""

    sample_rate: float
    channels: np.ndarray
    meta: dict = field(default_factory=dict)
    t0: float = 0.0

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 2:
            raise ValueError("channels must be a 2-D array (n_channels, n_samples)")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if np.isnan(self.channels).any():
            raise ValueError("record contains NaN samples")

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.sample_rate


class BridgeOutput(NamedTuple):
    volts: np.ndarray | float
    saturated: np.ndarray | bool


def force_to_delta_r(F, cal: ChannelCalibration) -> np.ndarray:
    """Resistance change per channel; ``F`` is (2,) or (2, n)."""
    return cal.K @ np.asarray(F, dtype=float)


def bridge_output(delta_r, chain: ReadoutChain, cal: ChannelCalibration) -> BridgeOutput:
    dR = np.asarray(delta_r, dtype=float)
    if np.any(cal.R0 + dR <= 0):
        bad = dR[cal.R0 + dR <= 0] if dR.ndim else dR
        raise DomainError(f"non-physical gauge resistance: R0 + dR <= 0 for dR = {np.ravel(bad)[:3]}")
    v = chain.amplifier_gain * chain.excitation_voltage * dR / (4.0 * cal.R0 + 2.0 * dR)
    saturated = np.abs(v) > chain.adc_saturation
    v = np.clip(v, -chain.adc_saturation, chain.adc_saturation)
    if v.ndim == 0:
        return BridgeOutput(float(v), bool(saturated))
    return BridgeOutput(v, saturated)


def bridge_to_resistance(volts, chain: ReadoutChain, cal: ChannelCalibration) -> np.ndarray:
    """Invert the quarter bridge: gauge resistance R0 + dR from output volts."""
    v = np.asarray(volts, dtype=float)
    gv = chain.amplifier_gain * chain.excitation_voltage
    return cal.R0 + 4.0 * cal.R0 * v / (gv - 2.0 * v)


def sensor_frame(whisker_axis) -> tuple[np.ndarray, np.ndarray]:
    """In-plane (e1, e2) basis; e1 is the rig longitudinal axis made normal to the whisker."""
    z = np.asarray(whisker_axis, dtype=float)
    z = z / np.linalg.norm(z)
    seed = RIG_LONGITUDINAL if abs(z @ RIG_LONGITUDINAL) < 0.9 else RIG_TRANSVERSE
    e1 = seed - (seed @ z) * z
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(z, e1)


def flow_to_tip_force(
    v,
    geom: WhiskerGeometry,
    drag: DragModel,
    whisker_axis=RIG_VERTICAL,
    quadrature=None,
) -> np.ndarray:
    """Tip force (F1, F2) [N] from the flow velocity at the sensing point.

    ``v`` may be a FlowSample, a 3-vector or a (3, n) array.  ``quadrature``
    is the same flow delayed by a quarter period; it only matters when the
    drag model has cross-axis coupling.
    """
    vel = v.velocity if isinstance(v, FlowSample) else np.asarray(v, dtype=float)
    e1, e2 = sensor_frame(whisker_axis)
    basis = np.stack([e1, e2])
    F = drag.linear_drag_gain * (basis @ vel)
    if drag.cross_coupling and quadrature is not None:
        q = quadrature.velocity if isinstance(quadrature, FlowSample) else np.asarray(quadrature, dtype=float)
        F = F + drag.linear_drag_gain * drag.cross_coupling * (basis @ q)[::-1]
    return F


@dataclass
class StaticSweep:
    forces: np.ndarray        # (n, 2) N
    resistances: np.ndarray   # (n, 4) ohm
    volts: np.ndarray         # (n, 4) V


def static_force_grid(f_max: float = 0.18, step: float = 0.02) -> np.ndarray:
    """Loading steps 0, step, ..., f_max along e1, as (n, 2)."""
    n = int(round(f_max / step)) + 1
    f1 = step * np.arange(n)
    return np.column_stack([f1, np.zeros_like(f1)])


def simulate_static_sweep(forces, cal: ChannelCalibration, chain: ReadoutChain, seed: int) -> StaticSweep:
    F = np.atleast_2d(np.asarray(forces, dtype=float))
    if F.size == 0:
        raise ValueError("force list is empty")
    if F.shape[1] != 2:
        raise ValueError("forces must be 2-vectors")
    rng = np.random.default_rng(seed)
    dR = force_to_delta_r(F.T, cal).T
    R = cal.R0 + dR + rng.normal(0.0, cal.sigma_R, size=dR.shape)
    volts = bridge_output(R - cal.R0, chain, cal).volts
    return StaticSweep(forces=F, resistances=R, volts=volts)


@dataclass
class FatigueRun:
    record: TimeSeriesRecord   # bridge volts
    markers: np.ndarray        # cycle boundaries, len = cycles + 1, last = n_samples


def cycle_markers(cycles: int, stroke_freq: float, sample_rate: float) -> np.ndarray:
    return np.rint(np.arange(cycles + 1) * sample_rate / stroke_freq).astype(np.int64)


def simulate_fatigue(
    cycles: int,
    stroke_freq: float,
    drift_rate,
    cal: ChannelCalibration,
    chain: ReadoutChain,
    seed: int,
    load_amplitude: float = 0.18,
) -> FatigueRun:
    """Alternating e1 load, cycle-locked to the sample clock.

    Each cycle starts on a marker sample at the load peak, so per-cycle
    extrema land exactly on markers; cycle lengths differ by at most one
    sample.  ``drift_rate`` [ppm of R0 per cycle] adds a baseline ramp that
    is linear in the (fractional) cycle index.
    """
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    chain.check_rate(stroke_freq)
    rates = np.broadcast_to(np.asarray(drift_rate, dtype=float), (4,))
    markers = cycle_markers(cycles, stroke_freq, chain.sample_rate)
    n = int(markers[-1])
    lengths = np.diff(markers)
    cycle_idx = np.repeat(np.arange(cycles), lengths)
    within = np.arange(n) - markers[:-1][cycle_idx]
    frac = within / lengths[cycle_idx]
    load = load_amplitude * np.cos(2.0 * np.pi * frac)
    dR = np.outer(cal.K[:, 0], load)
    dR += np.outer(rates * 1e-6 * cal.R0, cycle_idx + frac)
    rng = np.random.default_rng(seed)
    dR += rng.normal(0.0, cal.sigma_R, size=dR.shape)
    volts = bridge_output(dR, chain, cal).volts
    meta = {
        "experiment": "fatigue",
        "seed": seed,
        "cycles": cycles,
        "stroke_freq_hz": stroke_freq,
        "gain": chain.amplifier_gain,
        "drift_ppm_per_cycle": rates.tolist(),
    }
    return FatigueRun(TimeSeriesRecord(chain.sample_rate, volts, meta), markers)


def sensor_point(src: DipoleSource, L: float, T: float) -> np.ndarray:
    return src.center + L * RIG_LONGITUDINAL + T * RIG_TRANSVERSE


def simulate_dipole_trial(
    src: DipoleSource,
    L: float,
    T: float,
    geom: WhiskerGeometry,
    drag: DragModel,
    cal: ChannelCalibration,
    chain: ReadoutChain,
    duration: float,
    seed: int,
    ambient_noise: float = 0.0,
) -> TimeSeriesRecord:
    """One underwater trial: four bridge-voltage channels at ``chain.sample_rate``.

    The sensing point sits at (L, T) from the sphere centre in the rig
    frame, level with it; the whisker points along rig z and the drive axis
    must lie in the horizontal plane.  ``ambient_noise`` is extra white
    voltage noise [V rms] after the amplifier.
    """
    if duration < 2.0 / src.frequency:
        raise ValueError("duration must cover at least two drive periods")
    if abs(src.drive_axis @ RIG_VERTICAL) > 1e-9:
        raise ValueError("drive axis must be perpendicular to the whisker axis")
    chain.check_rate(src.frequency)
    point = sensor_point(src, L, T)
    w = envelope_vector(src, point)  # raises DomainError inside the sphere
    n = int(round(duration * chain.sample_rate))
    phase = 2.0 * np.pi * src.frequency * np.arange(n) / chain.sample_rate + src.phase
    F_in = flow_to_tip_force(w, geom, drag)
    F_q = flow_to_tip_force(np.zeros(3), geom, drag, quadrature=w)
    F = np.outer(F_in, np.cos(phase)) + np.outer(F_q, np.sin(phase))
    dR = force_to_delta_r(F, cal)
    rng = np.random.default_rng(seed)
    dR += rng.normal(0.0, cal.sigma_R, size=dR.shape)
    out = bridge_output(dR, chain, cal)
    volts = out.volts
    if ambient_noise:
        volts = np.clip(
            volts + rng.normal(0.0, ambient_noise, size=volts.shape),
            -chain.adc_saturation, chain.adc_saturation,
        )
    meta = {
        "seed": seed,
        "L_mm": L * 1e3,
        "T_mm": T * 1e3,
        "f_hz": src.frequency,
        "gain": chain.amplifier_gain,
        "U_mps": src.velocity_amplitude,
        "a_m": src.sphere_radius,
        "drive_axis": src.drive_axis.tolist(),
        "saturated": bool(np.any(out.saturated)),
    }
    return TimeSeriesRecord(chain.sample_rate, volts, meta)
