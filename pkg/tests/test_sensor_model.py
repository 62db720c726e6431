import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from whiskertwin import defaults
from whiskertwin.flowfield import DomainError
from whiskertwin.localization import forward_amplitudes
from whiskertwin.sensor_model import (
    DEFAULT_K,
    ChannelCalibration,
    DragModel,
    ReadoutChain,
    WhiskerGeometry,
    bridge_output,
    bridge_to_resistance,
    cycle_markers,
    flow_to_tip_force,
    force_to_delta_r,
    sensor_frame,
    simulate_dipole_trial,
    simulate_fatigue,
    simulate_static_sweep,
    static_force_grid,
)

CAL = ChannelCalibration()
STATIC = ReadoutChain(amplifier_gain=23.5)


def divider_bridge(R_active, R0, vex):
    # active gauge in the top arm of one half, three fixed R0 arms elsewhere
    left = vex * R_active / (R_active + R0)
    right = vex * R0 / (R0 + R0)
    return left - right


def test_delta_r_at_full_load():
    dR = force_to_delta_r([0.18, 0.0], CAL)
    assert dR == pytest.approx([87.0534, -1.8612, -94.878, -0.6624], abs=1e-9)


def test_bridge_matches_resistor_divider():
    dR = 87.0534
    expected = 23.5 * divider_bridge(1050 + dR, 1050, 5.0)
    out = bridge_output(dR, STATIC, CAL)
    assert out.volts == pytest.approx(expected, rel=1e-12)
    assert out.volts == pytest.approx(2.338483024694322, rel=1e-12)
    assert not out.saturated


def test_bridge_saturates_and_flags():
    out = bridge_output(np.array([60.0, -60.0, 1.0]), ReadoutChain(), CAL)
    assert out.volts.tolist()[:2] == [10.0, -10.0]
    assert out.saturated.tolist() == [True, True, False]


def test_nonphysical_resistance():
    with pytest.raises(DomainError):
        bridge_output(-2000.0, STATIC, CAL)


@given(st.floats(-200, 200))
def test_bridge_inverse_round_trip(dR):
    v = bridge_output(dR, STATIC, CAL).volts
    assert bridge_to_resistance(v, STATIC, CAL) == pytest.approx(1050 + dR, abs=1e-9)


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.1, 10))
def test_force_map_is_linear(f1, f2, k):
    a = force_to_delta_r([f1, f2], CAL)
    assert force_to_delta_r([k * f1, k * f2], CAL) == pytest.approx(k * a, abs=1e-9)


def test_calibration_invariants():
    with pytest.raises(ValueError, match="opposite signs"):
        ChannelCalibration(K=np.abs(DEFAULT_K))
    K = DEFAULT_K.copy()
    K[1, 0] = 100.0
    with pytest.raises(ValueError, match="off-axis"):
        ChannelCalibration(K=K)
    with pytest.raises(ValueError):
        ChannelCalibration(K=np.zeros((3, 2)))
    assert CAL.principal == pytest.approx([483.63, 505.365, 527.10, 505.365])


def test_readout_rate_check():
    ReadoutChain().check_rate(45.0)
    with pytest.raises(ValueError, match="20x"):
        ReadoutChain(sample_rate=100.0).check_rate(10.0)


def test_sensor_frame_default_axes():
    e1, e2 = sensor_frame([0, 0, 1])
    assert e1 == pytest.approx([1, 0, 0]) and e2 == pytest.approx([0, 1, 0])


def test_tip_force_projection_and_quadrature():
    geom = WhiskerGeometry()
    f = flow_to_tip_force([0.01, 0.02, 0.5], geom, DragModel(2.0))
    assert f == pytest.approx([0.02, 0.04])
    fq = flow_to_tip_force(np.zeros(3), geom, DragModel(2.0, 0.5), quadrature=[0.0, 0.02, 0.0])
    assert fq == pytest.approx([0.02, 0.0])


def test_geometry_validation():
    assert WhiskerGeometry().sensing_point_offset == 0.1
    with pytest.raises(ValueError):
        WhiskerGeometry(sensing_point_offset=0.2)


def test_static_grid_and_noise_free_sweep():
    grid = static_force_grid()
    assert grid.shape == (10, 2)
    assert grid[:, 0] == pytest.approx(np.arange(10) * 0.02)
    cal = ChannelCalibration(sigma_R=0.0)
    sw = simulate_static_sweep(grid, cal, STATIC, seed=1)
    assert sw.resistances[-1] == pytest.approx(1050 + np.array([87.0534, -1.8612, -94.878, -0.6624]))


def test_static_sweep_deterministic_and_noisy():
    a = simulate_static_sweep(static_force_grid(), CAL, STATIC, seed=4)
    b = simulate_static_sweep(static_force_grid(), CAL, STATIC, seed=4)
    c = simulate_static_sweep(static_force_grid(), CAL, STATIC, seed=5)
    assert np.array_equal(a.resistances, b.resistances)
    assert not np.array_equal(a.resistances, c.resistances)
    with pytest.raises(ValueError):
        simulate_static_sweep(np.empty((0, 2)), CAL, STATIC, 0)


def test_cycle_markers():
    m = cycle_markers(3, 1.5, 100.0)
    assert m.tolist() == [0, 67, 133, 200]


def test_fatigue_run_structure():
    chain = ReadoutChain(amplifier_gain=23.5, sample_rate=100.0)
    run = simulate_fatigue(300, 1.5, [2.0, 0, 1.1, 0], ChannelCalibration(sigma_R=0.0), chain, seed=0)
    assert run.record.n_samples == run.markers[-1] == 20000
    R = bridge_to_resistance(run.record.channels, chain, CAL)
    # cycle-locked: peaks land on markers, drift grows by rate * R0 per cycle
    peaks = R[0, run.markers[:-1]]
    assert np.diff(peaks) == pytest.approx(2e-6 * 1050, rel=1e-6)
    assert R[0, run.markers[5]] == pytest.approx(R[0, run.markers[5] - 1 : run.markers[5] + 2].max())
    with pytest.raises(ValueError):
        simulate_fatigue(0, 1.5, 0.0, CAL, chain, 0)


def _dft_amplitude(x, fs, f):
    n = x.size
    t = np.arange(n) / fs
    return 2 * abs(np.sum(x * np.exp(-2j * np.pi * f * t))) / n


@pytest.mark.parametrize("drive,L,T", [("longitudinal", 0.02, 0.0), ("transverse", 0.02, 0.0),
                                       ("longitudinal", 0.03, 0.008)])
def test_trial_matches_forward_model(drive, L, T):
    params = defaults.forward_params()
    cal = ChannelCalibration(sigma_R=0.0)
    rec = simulate_dipole_trial(defaults.source(drive), L, T, WhiskerGeometry(), defaults.drag(), cal,
                                defaults.underwater_chain(), 2.0, seed=0)
    amps = [_dft_amplitude(rec.channels[c], rec.sample_rate, 10.0) for c in range(4)]
    expected = forward_amplitudes(params, L, T, drive) - params.floors
    # residual differences: off-axis K terms and bridge curvature
    assert amps == pytest.approx(expected, rel=0.1)


def test_trial_metadata_and_errors():
    src = defaults.source("longitudinal")
    args = (WhiskerGeometry(), defaults.drag(), CAL, defaults.underwater_chain())
    rec = simulate_dipole_trial(src, 0.02, 0.001, *args, 1.0, seed=9)
    assert rec.meta["seed"] == 9 and rec.meta["L_mm"] == pytest.approx(20) and rec.meta["T_mm"] == pytest.approx(1)
    assert rec.n_samples == 6250 and rec.n_channels == 4
    assert simulate_dipole_trial(src, 0.01, 0.0, *args, 1.0, seed=0).meta["saturated"]
    with pytest.raises(ValueError, match="two drive periods"):
        simulate_dipole_trial(src, 0.02, 0.0, *args, 0.1, seed=0)
    with pytest.raises(DomainError):
        simulate_dipole_trial(src, 0.002, 0.0, *args, 1.0, seed=0)
    with pytest.raises(ValueError, match="perpendicular"):
        simulate_dipole_trial(src.replace(drive_axis=np.array([0, 0, 1.0])), 0.02, 0.0, *args, 1.0, seed=0)
