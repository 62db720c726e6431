import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whiskertwin import defaults
from whiskertwin.flowfield import envelope_vector
from whiskertwin.localization import (
    ForwardModelParams,
    classify_axis,
    fit_decay,
    forward_amplitudes,
    localize,
    noisy_amplitudes,
    operational_range,
)

P = defaults.forward_params()


def oracle_amplitudes(L, T, drive):
    # explicit chain: flow envelope -> drag -> |K| -> bridge small-signal gain, plus floor
    src = defaults.source(drive)
    w = envelope_vector(src, [L, T, 0.0])
    g = 166 * 5 / (4 * 1050) * defaults.DRAG_GAIN * np.array([483.63, 505.365, 527.10, 505.365])
    k = defaults.CROSS_COUPLING
    own = np.array([w[0], w[1], w[0], w[1]])
    other = np.array([w[1], w[0], w[1], w[0]])
    return g * np.hypot(own, k * other) + defaults.FLOOR_V


@pytest.mark.parametrize("L,T,drive", [(0.02, 0.0, "longitudinal"), (0.02, 0.0, "transverse"),
                                       (0.035, -0.01, "longitudinal"), (0.015, 0.004, "transverse")])
def test_forward_matches_oracle(L, T, drive):
    assert forward_amplitudes(P, L, T, drive) == pytest.approx(oracle_amplitudes(L, T, drive), rel=1e-12)


def test_default_anchor_amplitudes():
    a = forward_amplitudes(P, 0.02, 0.0, "transverse")
    assert a[3] == pytest.approx(1.41, rel=1e-9) and a[0] == pytest.approx(0.56, rel=1e-9)
    assert operational_range(P) == pytest.approx(0.045, rel=1e-8)


@given(st.floats(0.008, 0.06), st.floats(0.0, 0.04), st.sampled_from(["longitudinal", "transverse"]))
def test_mirror_symmetry_in_T(L, T, drive):
    assert forward_amplitudes(P, L, T, drive) == pytest.approx(forward_amplitudes(P, L, -T, drive), rel=1e-12)


@given(st.floats(0.006, 0.1), st.floats(1.01, 2.0))
def test_on_axis_monotone(L, k):
    a, b = forward_amplitudes(P, L, 0.0), forward_amplitudes(P, k * L, 0.0)
    assert np.all(b < a)


@given(st.floats(0.01, 1.0), st.floats(1.1, 4.0))
def test_range_shrinks_with_floor(floor, k):
    near = operational_range(P.replace(floors=floor))
    far = operational_range(P.replace(floors=k * floor))
    assert far < near
    # cube law: range scales with floor^(-1/3) once the floor term is negligible at range
    assert far == pytest.approx(near * k ** (-1 / 3), rel=0.02)


def test_range_edge_cases():
    assert operational_range(P.replace(floors=0.0)) == math.inf
    with pytest.raises(ValueError, match="factor > 1"):
        operational_range(P, threshold_factor=1.0)


@pytest.mark.parametrize("n", [2.0, 3.0, 4.0])
def test_decay_fit_recovers_exponent(n):
    L = np.array([10, 15, 20, 25, 30, 40, 50.0])
    A = 5.0 * (L / 10) ** (-n) + 0.01
    fit = fit_decay(L, A)
    assert fit.exponent == pytest.approx(n, rel=1e-6)
    assert fit.floor == pytest.approx(0.01, rel=1e-4)
    assert fit.amplitude_coeff * 10 ** (-n) == pytest.approx(5.0, rel=1e-6)


def test_decay_fit_unidentifiable_and_errors():
    fit = fit_decay([1, 2, 3, 4], [0.5] * 4)
    assert not fit.identifiable and fit.floor == 0.5 and math.isnan(fit.exponent)
    with pytest.raises(ValueError):
        fit_decay([1, 2, 3], [3, 2, 1])
    with pytest.raises(ValueError):
        fit_decay([1, 2, 3, 4], [3, 2, 1, -1])


def test_classify_axis():
    assert classify_axis([2.6, 1.0, 2.8, 1.0]) == ("longitudinal", pytest.approx(2.7, rel=0.01), False)
    assert classify_axis([0.56, 1.41, 0.6, 1.41]).axis == "transverse"
    assert classify_axis([1.0, 1.05, 1.0, 1.05]).ambiguous
    with pytest.raises(ValueError):
        classify_axis([0, 0, 0, 0])


def test_noisy_amplitudes_floor_statistics():
    rng = np.random.default_rng(1)
    a = forward_amplitudes(P, 0.02, 0.0)
    draws = np.array([noisy_amplitudes(P, a, rng) for _ in range(20000)])
    assert draws.mean(axis=0) == pytest.approx(a, rel=0.01)
    assert noisy_amplitudes(P.replace(floors=0.0), a - P.floors, rng) == pytest.approx(a - P.floors)


@settings(max_examples=25)
@given(st.floats(0.010, 0.040), st.floats(-0.3, 0.3), st.sampled_from(["longitudinal", "transverse"]))
def test_localize_round_trip(L, frac, drive):
    T = frac * L
    est = localize(forward_amplitudes(P, L, T, drive), 10.0, P)
    assert est.L_hat == pytest.approx(L, abs=1e-6)
    assert est.T_abs_hat == pytest.approx(abs(T), abs=1e-5)
    assert est.in_range == (L <= operational_range(P, drive=drive)) and est.frequency == 10.0


def test_localize_out_of_range_and_floor_only():
    est = localize(P.floors.copy(), 10.0, P)
    assert est.L_hat == math.inf and not est.in_range
    far = localize(forward_amplitudes(P, 0.055, 0.0), 10.0, P)
    assert far.L_hat == pytest.approx(0.055, rel=1e-4) and not far.in_range


def test_params_validation():
    with pytest.raises(ValueError):
        ForwardModelParams([1, 1, 1, 0], 0.1)
    with pytest.raises(ValueError):
        ForwardModelParams([1, 1, 1, 1], -0.1)
