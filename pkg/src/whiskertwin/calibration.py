"""Metrology: linear calibration fit, limit of detection, cyclic drift,
and frequency-tracking statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sensor_model import TimeSeriesRecord


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class LinearFit:
    intercept: float      # R0_hat [ohm]
    slope: float          # k_hat [ohm/N]
    r_squared: float
    residual_std: float   # [ohm]
    n_points: int


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, np.ndarray]:
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    if ss_res == 0.0 or x.size == 2:
        r2 = 1.0
    elif ss_tot == 0.0:
        r2 = 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2, resid


def fit_linear(forces, resistances) -> LinearFit:
    """Ordinary least squares R = R0 + k F."""
    x = np.asarray(forces, dtype=float).ravel()
    y = np.asarray(resistances, dtype=float).ravel()
    if x.size != y.size or x.size < 2:
        raise DegenerateInputError("need two or more (force, resistance) pairs of equal length")
    if np.ptp(x) == 0:
        raise DegenerateInputError("all forces are identical; slope is undefined")
    slope, intercept, r2, resid = _ols(x, y)
    dof = x.size - 2
    rstd = float(np.sqrt(np.sum(resid**2) / dof)) if dof > 0 else 0.0
    return LinearFit(intercept, slope, r2, rstd, int(x.size))


def limit_of_detection(sigma_y: float, S: float) -> float:
    """3 sigma_y / |S| [N]; the sign of the sensitivity is irrelevant."""
    if sigma_y < 0:
        raise ValueError("sigma_y must be >= 0")
    if S == 0:
        raise ValueError("sensitivity S must be non-zero")
    return 3.0 * sigma_y / abs(S)


@dataclass(frozen=True)
class CycleExtrema:
    maxima: np.ndarray      # per-cycle max of channel 1
    minima: np.ndarray      # per-cycle min of channel 3
    argmax: np.ndarray      # sample index of each maximum
    argmin: np.ndarray

    def __len__(self):
        return len(self.maxima)


def cycle_extrema(record: TimeSeriesRecord, cycle_markers, max_channel: int = 0, min_channel: int = 2) -> CycleExtrema:
    """Per-cycle max of channel 1 and min of channel 3.

    ``cycle_markers`` are cycle boundaries; cycle k spans
    [markers[k], markers[k+1]).  The last marker may equal the record length.
    """
    m = np.asarray(cycle_markers, dtype=np.int64)
    if m.size < 3:
        raise ValueError("need at least two complete cycles (three markers)")
    if np.any(np.diff(m) <= 0):
        raise ValueError("cycle markers must be strictly increasing")
    if m[0] < 0 or m[-1] > record.n_samples:
        raise ValueError(f"cycle marker outside record of {record.n_samples} samples")
    hi = np.maximum.reduceat(record.channels[max_channel], m[:-1])
    lo = np.minimum.reduceat(record.channels[min_channel], m[:-1])
    # reduceat's last group runs to the end of the array; clip it to the final marker
    last = slice(m[-2], m[-1])
    hi[-1] = record.channels[max_channel, last].max()
    lo[-1] = record.channels[min_channel, last].min()
    argmax = np.array([s + np.argmax(record.channels[max_channel, s:e]) for s, e in zip(m[:-1], m[1:])])
    argmin = np.array([s + np.argmin(record.channels[min_channel, s:e]) for s, e in zip(m[:-1], m[1:])])
    return CycleExtrema(hi, lo, argmax, argmin)


@dataclass(frozen=True)
class DriftReport:
    cumulative_offset_pct: dict   # name -> %
    drift_rate_ppm: dict          # name -> ppm/cycle
    baseline: float
    n_cycles: int
    block: int


def drift_metrics(extrema: dict, baseline: float, block: int = 100) -> DriftReport:
    """First-block vs last-block mean shift of each per-cycle series.

    ``extrema`` maps a label to a per-cycle series (e.g. {"ch1_max": ...,
    "ch3_min": ...}).  Offsets are relative to ``baseline``.
    """
    if baseline == 0:
        raise ValueError("baseline must be non-zero")
    series = {k: np.asarray(v, dtype=float) for k, v in extrema.items()}
    if not series:
        raise ValueError("no extrema series given")
    lengths = {len(v) for v in series.values()}
    if len(lengths) != 1:
        raise ValueError("extrema series differ in length")
    n = lengths.pop()
    if n < 2 * block:
        raise DegenerateInputError(f"need at least {2 * block} cycles, got {n}")
    pct, rate = {}, {}
    for name, v in series.items():
        shift = abs(v[-block:].mean() - v[:block].mean())
        pct[name] = float(shift / abs(baseline) * 100.0)
        rate[name] = pct[name] * 1e4 / n
    return DriftReport(pct, rate, float(baseline), int(n), block)


@dataclass(frozen=True)
class FreqTrackReport:
    slope: float
    intercept: float
    r_squared: float
    max_abs_err: float
    median_abs_err: float
    mean_abs_err: float
    rmse: float
    n: int


def freq_tracking_metrics(commanded, detected) -> FreqTrackReport:
    """OLS of detected on commanded, plus error statistics of detected - commanded [Hz]."""
    x = np.asarray(commanded, dtype=float).ravel()
    y = np.asarray(detected, dtype=float).ravel()
    if x.size != y.size or x.size < 3:
        raise DegenerateInputError("need three or more (commanded, detected) pairs of equal length")
    if np.ptp(x) == 0:
        raise DegenerateInputError("commanded frequencies are all identical")
    slope, intercept, r2, _ = _ols(x, y)
    err = np.abs(y - x)
    return FreqTrackReport(
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        max_abs_err=float(err.max()),
        median_abs_err=float(np.median(err)),
        mean_abs_err=float(err.mean()),
        rmse=float(np.sqrt(np.mean(err**2))),
        n=int(x.size),
    )
