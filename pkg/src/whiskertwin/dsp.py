"""Record -> amplitude at the drive frequency.

Chain: rational polyphase resampling (6250 -> 100 Hz is up 2 / down 125),
fixed-window segmentation, per-window mean removal, Hann-windowed
single-sided amplitude spectrum, and a three-point log-parabolic peak
refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy import signal

from .sensor_model import TimeSeriesRecord

MAX_RATIO_TERM = 1000
STOPBAND_DB = 80.0


class ConfigurationError(ValueError):
    pass


class EmptyResultError(ValueError):
    pass


# --------------------------------------------------------------------------
# resampling


def rational_ratio(source_rate: float, target_rate: float) -> tuple[int, int]:
    """(up, down) with target/source = up/down in lowest terms."""
    try:
        ratio = Fraction(str(target_rate)) / Fraction(str(source_rate))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"cannot form a ratio from {target_rate}/{source_rate}") from exc
    if ratio.numerator > MAX_RATIO_TERM or ratio.denominator > MAX_RATIO_TERM:
        raise ConfigurationError(
            f"resampling ratio {ratio} is not a small rational (terms must be <= {MAX_RATIO_TERM})"
        )
    return ratio.numerator, ratio.denominator


@lru_cache(maxsize=16)
def antialias_filter(up: int, down: int, target_rate: float, source_rate: float) -> np.ndarray:
    """Kaiser low-pass at the upsampled rate, -6 dB at 0.45 x target_rate.

    Transition 0.40 -> 0.50 x target_rate, normalised to unit DC gain
    (resample_poly applies the factor ``up`` itself).
    """
    nyq = 0.5 * source_rate * up
    width = 0.1 * target_rate / nyq
    numtaps, beta = signal.kaiserord(STOPBAND_DB, width)
    numtaps |= 1
    h = signal.firwin(numtaps, 0.45 * target_rate / nyq, window=("kaiser", beta))
    h /= h.sum()
    h.setflags(write=False)
    return h


def resample_to(record: TimeSeriesRecord, target_rate: float) -> TimeSeriesRecord:
    if not 0 < target_rate < record.sample_rate:
        raise ConfigurationError(
            f"target rate {target_rate} Hz must be positive and below {record.sample_rate} Hz"
        )
    up, down = rational_ratio(record.sample_rate, target_rate)
    h = antialias_filter(up, down, float(target_rate), float(record.sample_rate))
    y = signal.resample_poly(record.channels, up, down, axis=1, window=np.array(h), padtype="line")
    meta = dict(record.meta, resampled_from_hz=record.sample_rate)
    return TimeSeriesRecord(float(target_rate), y, meta, t0=record.t0)


# --------------------------------------------------------------------------
# segmentation


def segment(record: TimeSeriesRecord, window_seconds: float, hop_seconds: float | None = None) -> list[TimeSeriesRecord]:
    hop_seconds = window_seconds if hop_seconds is None else hop_seconds
    n_win = int(round(window_seconds * record.sample_rate))
    n_hop = int(round(hop_seconds * record.sample_rate))
    if n_win < 1 or n_hop < 1:
        raise ConfigurationError("window and hop must each span at least one sample")
    if record.n_samples < n_win:
        raise EmptyResultError(
            f"record of {record.duration:.6g} s is shorter than one {window_seconds} s window"
        )
    starts = range(0, record.n_samples - n_win + 1, n_hop)
    return [
        TimeSeriesRecord(
            record.sample_rate,
            record.channels[:, s : s + n_win],
            record.meta,
            t0=record.t0 + s / record.sample_rate,
        )
        for s in starts
    ]


def trim(record: TimeSeriesRecord, seconds: float) -> TimeSeriesRecord:
    """Drop ``seconds`` from both ends (resampler edge transients)."""
    k = int(round(seconds * record.sample_rate))
    if 2 * k >= record.n_samples:
        raise EmptyResultError("nothing left after trimming")
    return TimeSeriesRecord(record.sample_rate, record.channels[:, k : record.n_samples - k],
                            record.meta, t0=record.t0 + k / record.sample_rate)


def detrend_mean(seg: TimeSeriesRecord) -> TimeSeriesRecord:
    if seg.n_samples == 0:
        raise EmptyResultError("empty segment")
    x = seg.channels - seg.channels.mean(axis=1, keepdims=True)
    return TimeSeriesRecord(seg.sample_rate, x, seg.meta, t0=seg.t0)


# --------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class Spectrum:
    """Single-sided amplitude spectrum; ``magnitudes`` is (bins,) or (channels, bins)."""

    df: float
    magnitudes: np.ndarray
    window: str
    coherent_gain: float
    n_samples: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.df * np.arange(self.magnitudes.shape[-1])

    @property
    def nyquist(self) -> float:
        return 0.5 * self.df * self.n_samples

    def channel(self, i: int) -> "Spectrum":
        if self.magnitudes.ndim == 1:
            raise ValueError("spectrum has a single channel")
        return replace(self, magnitudes=self.magnitudes[i])

    def windowed_energy(self) -> np.ndarray:
        """Sum of (w*x)^2 recovered from the amplitudes (Parseval)."""
        a2 = self.magnitudes**2
        n = self.n_samples
        interior = slice(1, -1) if n % 2 == 0 else slice(1, None)
        e = a2[..., 0] + 0.5 * a2[..., interior].sum(axis=-1)
        if n % 2 == 0:
            e = e + a2[..., -1]
        return n * self.coherent_gain**2 * e


def amplitude_spectrum(seg, window: str = "hann", sample_rate: float | None = None) -> Spectrum:
    """Amplitude spectrum scaled so an on-bin sine of amplitude A peaks at A.

    ``seg`` is a TimeSeriesRecord (all channels) or a 1-D array with
    ``sample_rate``.
    """
    if isinstance(seg, TimeSeriesRecord):
        x, fs = seg.channels, seg.sample_rate
    else:
        x = np.asarray(seg, dtype=float)
        if sample_rate is None:
            raise ValueError("sample_rate is required for bare arrays")
        fs = sample_rate
    n = x.shape[-1]
    if n < 16:
        raise ValueError("segment must hold at least 16 samples")
    w = signal.get_window(window, n)
    cg = w.sum() / n
    X = np.abs(np.fft.rfft(x * w, axis=-1)) / w.sum()
    X[..., 1 : (n + 1) // 2] *= 2.0
    return Spectrum(df=fs / n, magnitudes=X, window=window, coherent_gain=cg, n_samples=n)


def average_spectra(spectra: Sequence[Spectrum]) -> Spectrum:
    if not spectra:
        raise EmptyResultError("no spectra to average")
    mags = np.mean([s.magnitudes for s in spectra], axis=0)
    return replace(spectra[0], magnitudes=mags)


class PeakEstimate(NamedTuple):
    frequency: float
    amplitude: float
    bin_index: int
    interpolated: bool
    ambiguous: bool = False
    significant: bool = True


def _hann_kernel(offset: float) -> float:
    """Hann amplitude response at ``offset`` bins, relative to on-bin."""
    return float(np.sinc(offset) / (1.0 - offset * offset))


def _refine(spec: Spectrum, k: int) -> PeakEstimate:
    mags = spec.magnitudes
    peak = mags[k]
    if peak <= 0 or k == 0 or k == len(mags) - 1:
        return PeakEstimate(k * spec.df, float(peak), k, False)
    tiny = np.finfo(float).tiny
    a, b, c = np.log(np.maximum(mags[k - 1 : k + 2], tiny))
    denom = a - 2.0 * b + c
    if denom >= 0:
        return PeakEstimate(k * spec.df, float(peak), k, False)
    p = 0.5 * (a - c) / denom
    if spec.window in ("hann", "hanning") and abs(p) < 1.0:
        amp = peak / _hann_kernel(p)
    else:
        amp = math.exp(b - 0.25 * (a - c) * p)
    return PeakEstimate((k + p) * spec.df, float(amp), k, True)


def _band_peak(spec: Spectrum, lo: float, hi: float) -> PeakEstimate:
    if spec.magnitudes.ndim != 1:
        raise ValueError("select a channel first (Spectrum.channel)")
    freqs = spec.frequencies
    idx = np.flatnonzero((freqs >= lo - 1e-9 * spec.df) & (freqs <= hi + 1e-9 * spec.df))
    if idx.size == 0:
        raise ValueError(f"no spectral bins in [{lo}, {hi}] Hz")
    band = spec.magnitudes[idx]
    j = int(np.argmax(band))  # first maximum, i.e. lowest frequency on ties
    top = band[j]
    # another local maximum of equal height elsewhere in the band
    ambiguous = False
    if top > 0:
        equal = np.flatnonzero(np.abs(band - top) <= 1e-9 * top)
        ambiguous = bool(np.any(np.abs(equal - j) > 1))
    est = _refine(spec, int(idx[j]))
    return est._replace(ambiguous=ambiguous)


def peak_near(spec: Spectrum, f_target: float, search_halfwidth: float) -> PeakEstimate:
    if f_target + search_halfwidth > spec.nyquist + 1e-9:
        raise ValueError(
            f"search band {f_target} +/- {search_halfwidth} Hz exceeds Nyquist {spec.nyquist} Hz"
        )
    return _band_peak(spec, f_target - search_halfwidth, f_target + search_halfwidth)


def detect_dominant(spec: Spectrum, band: tuple[float, float] = (1.0, 50.0)) -> PeakEstimate:
    lo, hi = band
    hi = min(hi, spec.nyquist)
    est = _band_peak(spec, lo, hi)
    sel = (spec.frequencies >= lo) & (spec.frequencies <= hi)
    median = float(np.median(spec.magnitudes[sel]))
    return est._replace(significant=bool(est.amplitude >= 4.0 * median))


@dataclass
class HarmonicLevels:
    levels: list[tuple[int, float]] = field(default_factory=list)  # (order, amplitude)
    excluded: list[int] = field(default_factory=list)
    reason: str = ""


def harmonic_levels(spec: Spectrum, f0: float, n_harmonics: int, search_halfwidth: float | None = None) -> HarmonicLevels:
    """Amplitudes at 2 f0 .. n f0, for monitoring only."""
    hw = 2.0 * spec.df if search_halfwidth is None else search_halfwidth
    out = HarmonicLevels()
    for order in range(2, n_harmonics + 1):
        f = order * f0
        if f + hw > spec.nyquist:
            out.excluded.append(order)
            continue
        out.levels.append((order, peak_near(spec, f, hw).amplitude))
    if out.excluded:
        out.reason = f"harmonics {out.excluded} lie above Nyquist {spec.nyquist:g} Hz"
    return out


class TrialStats(NamedTuple):
    mean: float
    std: float
    n: int

    @property
    def single_trial(self) -> bool:
        return self.n == 1


def aggregate_trials(values) -> TrialStats:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyResultError("no trial values to aggregate")
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return TrialStats(float(np.mean(v)), std, int(v.size))


# --------------------------------------------------------------------------
# full chain


@dataclass(frozen=True)
class DspConfig:
    analysis_rate: float = 100.0
    window_seconds: float = 10.0
    hop_seconds: float | None = None
    settle_seconds: float = 1.0
    window: str = "hann"
    search_halfwidth: float = 0.5


def record_spectrum(record: TimeSeriesRecord, cfg: DspConfig = DspConfig()) -> Spectrum:
    """Resample, trim edges, segment, detrend and average the window spectra."""
    rec = record
    if rec.sample_rate > cfg.analysis_rate:
        rec = resample_to(rec, cfg.analysis_rate)
    if cfg.settle_seconds > 0:
        rec = trim(rec, cfg.settle_seconds)
    segs = segment(rec, cfg.window_seconds, cfg.hop_seconds)
    return average_spectra([amplitude_spectrum(detrend_mean(s), cfg.window) for s in segs])


def channel_peaks(record: TimeSeriesRecord, f_target: float, cfg: DspConfig = DspConfig()) -> list[PeakEstimate]:
    spec = record_spectrum(record, cfg)
    return [peak_near(spec.channel(i), f_target, cfg.search_halfwidth) for i in range(record.n_channels)]


def channel_dominant(record: TimeSeriesRecord, cfg: DspConfig = DspConfig(),
                     band: tuple[float, float] = (1.0, 50.0)) -> list[PeakEstimate]:
    spec = record_spectrum(record, cfg)
    return [detect_dominant(spec.channel(i), band) for i in range(record.n_channels)]
