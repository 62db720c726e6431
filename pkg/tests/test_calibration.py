import numpy as np
import pytest
from hypothesis import given, strategies as st

from whiskertwin.calibration import (
    DegenerateInputError,
    cycle_extrema,
    drift_metrics,
    fit_linear,
    freq_tracking_metrics,
    limit_of_detection,
)
from whiskertwin.sensor_model import TimeSeriesRecord


def test_exact_line():
    F = np.arange(10) * 0.02
    fit = fit_linear(F, 1050 + 483.63 * F)
    assert fit.slope == pytest.approx(483.63, rel=1e-12)
    assert fit.intercept == pytest.approx(1050, rel=1e-12)
    assert fit.r_squared == 1.0 and fit.residual_std == pytest.approx(0, abs=1e-9) and fit.n_points == 10


def test_fit_matches_polyfit(rng):
    F = np.linspace(0, 0.18, 10)
    R = 1050 - 527.1 * F + rng.normal(0, 0.044, 10)
    fit = fit_linear(F, R)
    slope, intercept = np.polyfit(F, R, 1)
    assert fit.slope == pytest.approx(slope, rel=1e-10)
    assert fit.r_squared == pytest.approx(np.corrcoef(F, R)[0, 1] ** 2, rel=1e-10)


def test_fit_degenerate():
    with pytest.raises(DegenerateInputError):
        fit_linear([0.1, 0.1, 0.1], [1, 2, 3])
    with pytest.raises(DegenerateInputError):
        fit_linear([0.1], [1])


def test_lod_closed_form():
    assert limit_of_detection(0.044, 483.63) == pytest.approx(2.729359220e-4, rel=1e-9)
    assert limit_of_detection(0.044, -527.10) == pytest.approx(3 * 0.044 / 527.10, rel=1e-12)
    assert limit_of_detection(0.044, 483.63) == pytest.approx(2.69e-4, rel=0.02)
    with pytest.raises(ValueError):
        limit_of_detection(0.044, 0.0)
    with pytest.raises(ValueError):
        limit_of_detection(-1.0, 1.0)


@given(st.floats(0.001, 1.0), st.floats(1.0, 1000.0), st.floats(1.1, 10.0))
def test_lod_scaling(sigma, S, k):
    assert limit_of_detection(k * sigma, S) == pytest.approx(k * limit_of_detection(sigma, S))
    assert limit_of_detection(sigma, k * S) < limit_of_detection(sigma, S)


def _cyclic_record(cycles=400, period=50, drift=(1e-3, 5e-4)):
    n = cycles * period
    i = np.arange(n)
    c = np.cos(2 * np.pi * i / period)
    ch1 = 1000 + 10 * c + drift[0] * i / period
    ch3 = 1000 - 10 * c + drift[1] * i / period
    rec = TimeSeriesRecord(100.0, np.vstack([ch1, ch1, ch3, ch3]))
    return rec, np.arange(cycles + 1) * period


def test_cycle_extrema_counts_and_positions():
    rec, m = _cyclic_record()
    ext = cycle_extrema(rec, m)
    assert len(ext) == 400
    assert np.array_equal(ext.argmax, m[:-1]) and np.array_equal(ext.argmin, m[:-1])


def test_cycle_extrema_last_group_clipped():
    rec, m = _cyclic_record(cycles=10)
    ext = cycle_extrema(rec, m[:-2])  # stop before the end of the record
    assert len(ext) == 8
    # later, larger (drifted) peaks beyond the final marker must not leak in
    assert ext.maxima[-1] == rec.channels[0, 350]


def test_cycle_extrema_validation():
    rec, m = _cyclic_record(cycles=10)
    with pytest.raises(ValueError):
        cycle_extrema(rec, m[:2])
    with pytest.raises(ValueError):
        cycle_extrema(rec, m[::-1])
    with pytest.raises(ValueError):
        cycle_extrema(rec, m + 10_000)


def test_drift_metrics_known_ramp():
    n, base = 10_000, 1050.0
    k = np.arange(n)
    ramp = base + 2e-6 * base * k
    rep = drift_metrics({"up": ramp, "flat": np.full(n, base)}, base, block=100)
    # block means sit (n - block) cycles apart
    assert rep.cumulative_offset_pct["up"] == pytest.approx(2.0 * (n - 100) / n, rel=1e-9)
    assert rep.drift_rate_ppm["up"] == pytest.approx(2.0 * (n - 100) / n, rel=1e-9)
    assert rep.cumulative_offset_pct["flat"] == 0.0
    assert rep.n_cycles == n


def test_drift_metrics_errors():
    with pytest.raises(DegenerateInputError):
        drift_metrics({"a": np.ones(150)}, 1.0, block=100)
    with pytest.raises(ValueError):
        drift_metrics({"a": np.ones(300), "b": np.ones(299)}, 1.0)
    with pytest.raises(ValueError):
        drift_metrics({"a": np.ones(300)}, 0.0)


def test_freq_tracking_perfect_and_biased():
    f = np.linspace(1, 45, 89)
    rep = freq_tracking_metrics(f, f)
    assert rep.slope == pytest.approx(1) and rep.r_squared == 1.0 and rep.rmse == 0.0
    rep = freq_tracking_metrics(f, f + 0.04)
    assert rep.intercept == pytest.approx(0.04) and rep.max_abs_err == pytest.approx(0.04)
    assert rep.rmse == pytest.approx(0.04) and rep.median_abs_err == pytest.approx(0.04)
    with pytest.raises(DegenerateInputError):
        freq_tracking_metrics([5, 5, 5], [5, 5, 5])
