"""Four-channel amplitudes -> source distance, transverse offset and flow axis.

Forward model
-------------
For a sensor at (L, T) from the sphere, let ``w`` be the in-plane peak
velocity (e1 = longitudinal, e2 = transverse).  Channel i, whose bending
axis is p(i), responds with

    A_i = g_i * sqrt(w_p(i)^2 + kappa^2 * w_other^2) + floor_i

where ``kappa`` is the quadrature cross-axis leakage of the drag model.
This is the small-signal, principal-axis form of the sensor chain; it is
exactly symmetric under T -> -T, so only |T| can be recovered.

Inversion is a grid search over (L, |T|) for each drive hypothesis
followed by Gauss-Newton refinement.  Different geometries can produce
identical amplitude sets; when several refined candidates fit equally
well the one closest to the drive line (smallest |T|/L) is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .flowfield import DipoleSource, DomainError, envelope_field
from .sensor_model import (
    PRINCIPAL_AXIS,
    RIG_LONGITUDINAL,
    RIG_TRANSVERSE,
    ChannelCalibration,
    DragModel,
    ReadoutChain,
)
from .solvers import ConvergenceError, GNResult, gauss_newton

DRIVES = {"longitudinal": RIG_LONGITUDINAL, "transverse": RIG_TRANSVERSE}


@dataclass(frozen=True)
class ForwardModelParams:
    gains: np.ndarray                 # V per (m/s), per channel
    floors: np.ndarray                # V, per channel
    cross_coupling: float = 0.0
    decay_exponent: float = 3.0
    sphere_radius: float = 0.005      # reference source
    velocity_amplitude: float = 0.1

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float).reshape(4)
        f = np.broadcast_to(np.asarray(self.floors, dtype=float), (4,)).copy()
        if np.any(g <= 0):
            raise ValueError("channel gains must be > 0")
        if np.any(f < 0):
            raise ValueError("noise floors must be >= 0")
        if not self.decay_exponent > 0:
            raise ValueError("decay exponent must be > 0")
        if self.cross_coupling < 0:
            raise ValueError("cross_coupling must be >= 0")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "floors", f)

    @classmethod
    def from_chain(cls, cal: ChannelCalibration, chain: ReadoutChain, drag: DragModel, floors,
                   sphere_radius: float = 0.005, velocity_amplitude: float = 0.1) -> "ForwardModelParams":
        gains = chain.small_signal_gain(cal.R0) * drag.linear_drag_gain * cal.principal
        return cls(gains, floors, drag.cross_coupling, 3.0, sphere_radius, velocity_amplitude)

    def replace(self, **changes) -> "ForwardModelParams":
        return replace(self, **changes)


def _drive_vector(drive) -> np.ndarray:
    if isinstance(drive, str):
        try:
            return DRIVES[drive]
        except KeyError:
            raise ValueError(f"unknown drive hypothesis {drive!r}; expected one of {sorted(DRIVES)}") from None
    v = np.asarray(drive, dtype=float)
    return v / np.linalg.norm(v)


def _source(params: ForwardModelParams, drive, src: DipoleSource | None) -> DipoleSource:
    if src is not None:
        return src
    return DipoleSource(np.zeros(3), _drive_vector(drive), params.sphere_radius,
                        params.velocity_amplitude, frequency=1.0)


def _inplane_envelope(params: ForwardModelParams, src: DipoleSource, L, T) -> np.ndarray:
    L = np.atleast_1d(np.asarray(L, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    L, T = np.broadcast_arrays(L, T)
    pts = np.column_stack([L.ravel(), T.ravel(), np.zeros(L.size)]) + src.center
    w = envelope_field(src, pts)[:, :2]
    if params.decay_exponent != 3.0:
        r = np.hypot(L.ravel(), T.ravel())
        w = w * ((r / src.sphere_radius) ** (3.0 - params.decay_exponent))[:, None]
    return w.reshape(L.shape + (2,))


def _channel_amplitudes(params: ForwardModelParams, w: np.ndarray) -> np.ndarray:
    own = w[..., list(PRINCIPAL_AXIS)]
    other = w[..., [1 - a for a in PRINCIPAL_AXIS]]
    k = params.cross_coupling
    return params.gains * np.sqrt(own**2 + (k * other) ** 2) + params.floors


def forward_amplitudes(params: ForwardModelParams, L: float, T: float, drive="longitudinal",
                       src: DipoleSource | None = None) -> np.ndarray:
    """Noise-free spectral amplitude [V] on channels 1..4.

    ``src`` overrides the reference sphere of ``params`` (radius, speed,
    drive axis).
    """
    s = _source(params, drive, src)
    w = _inplane_envelope(params, s, L, T)
    return _channel_amplitudes(params, w)[0]


def noisy_amplitudes(params: ForwardModelParams, amplitudes, rng: np.random.Generator) -> np.ndarray:
    """Replace each channel's mean floor with a Rayleigh draw of the same mean."""
    a = np.asarray(amplitudes, dtype=float)
    sigma = params.floors / math.sqrt(math.pi / 2.0)
    return a - params.floors + rng.rayleigh(np.maximum(sigma, 1e-300), size=a.shape) * (sigma > 0)


# --------------------------------------------------------------------------
# decay fit


@dataclass(frozen=True)
class DecayFit:
    amplitude_coeff: float   # A0 in A = A0 / L^n + floor (L in the caller's units)
    exponent: float
    floor: float
    converged: bool
    identifiable: bool = True
    residual: float = 0.0     # rms relative misfit


def fit_decay(L_values, amplitudes, n_grid: Sequence[float] | None = None, max_iter: int = 200) -> DecayFit:
    """Fit A = A0 / L^n + floor by grid-seeded Gauss-Newton on relative residuals."""
    L = np.asarray(L_values, dtype=float).ravel()
    A = np.asarray(amplitudes, dtype=float).ravel()
    if L.size != A.size:
        raise ValueError("L_values and amplitudes differ in length")
    if np.unique(L).size < 4:
        raise ValueError("need at least four distinct distances")
    if np.any(L <= 0) or np.any(A <= 0):
        raise ValueError("distances and amplitudes must be positive")
    if np.ptp(A) <= 1e-12 * A.mean():
        return DecayFit(0.0, math.nan, float(A.mean()), True, identifiable=False)

    L_ref = float(np.exp(np.mean(np.log(L))))
    x = L / L_ref

    def model(p):
        return np.exp(p[0]) * x ** (-p[1]) + p[2]

    def resid(p):
        return (model(p) - A) / A

    # seed: for each trial exponent, coefficient and floor are linear
    best = None
    for n in np.linspace(0.25, 8.0, 32) if n_grid is None else n_grid:
        B = np.column_stack([x ** (-n), np.ones_like(x)]) / A[:, None]
        (c, fl), *_ = np.linalg.lstsq(B, np.ones_like(A), rcond=None)
        if c <= 0:
            continue
        cost = float(np.sum((B @ [c, fl] - 1.0) ** 2))
        if best is None or cost < best[0]:
            best = (cost, np.array([math.log(c), n, fl]))
    if best is None:
        raise ConvergenceError("no grid seed with a positive decay coefficient",
                               GNResult(np.full(3, np.nan), math.inf, np.full(A.size, np.nan), 0, False))
    res = gauss_newton(resid, best[1], max_iter=max_iter)
    c, n, fl = res.x
    a0 = math.exp(c) * L_ref**n
    rms = float(np.sqrt(np.mean(res.residuals**2)))
    return DecayFit(a0, float(n), float(fl), res.converged, True, rms)


# --------------------------------------------------------------------------
# axis classification


class AxisClass(NamedTuple):
    axis: str            # "longitudinal" | "transverse"
    ratio: float         # larger / smaller pair RMS
    ambiguous: bool


def classify_axis(amp4, ambiguity_ratio: float = 1.2) -> AxisClass:
    a = np.asarray(amp4, dtype=float).reshape(4)
    if np.any(a < 0):
        raise ValueError("amplitudes must be non-negative")
    if not np.any(a > 0):
        raise ValueError("all amplitudes are zero; no axis to classify")
    long_rms = math.sqrt(0.5 * (a[0] ** 2 + a[2] ** 2))
    trans_rms = math.sqrt(0.5 * (a[1] ** 2 + a[3] ** 2))
    axis = "longitudinal" if long_rms > trans_rms else "transverse"
    hi, lo = max(long_rms, trans_rms), min(long_rms, trans_rms)
    ratio = hi / lo if lo > 0 else math.inf
    return AxisClass(axis, ratio, ratio < ambiguity_ratio)


# --------------------------------------------------------------------------
# operational range


def operational_range(params: ForwardModelParams, threshold_factor: float = 3.0, drive="longitudinal",
                      src: DipoleSource | None = None, rtol: float = 1e-10) -> float:
    """Smallest on-axis distance [m] at which no channel reaches ``threshold_factor`` x its floor.

    Returns ``math.inf`` when some channel has a zero floor (never crossed).
    """
    if threshold_factor <= 1.0:
        raise ValueError("detection threshold must lie above the noise floor (factor > 1)")
    if np.any(params.floors == 0):
        return math.inf
    s = _source(params, drive, src)
    threshold = threshold_factor * params.floors

    def detectable(L):
        return bool(np.any(forward_amplitudes(params, L, 0.0, src=s) >= threshold))

    lo = s.sphere_radius * (1.0 + 1e-9)
    if not detectable(lo):
        return lo
    hi = max(2.0 * lo, 0.01)
    while detectable(hi):
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if detectable(mid):
            lo = mid
        else:
            hi = mid
    return hi


# --------------------------------------------------------------------------
# localisation


@dataclass(frozen=True)
class GeometryEstimate:
    frequency: float
    L_hat: float
    T_abs_hat: float
    axis: str | None
    residual: float
    in_range: bool
    drive: str | None = None
    axis_ratio: float = math.nan
    n_equivalent: int = 0       # other candidate geometries that fit equally well
    candidates: list = field(default_factory=list, compare=False)


@dataclass(frozen=True)
class LocalizationGrid:
    L_min: float = 0.005
    L_max: float = 0.060
    T_max: float = 0.040
    step: float = 0.0005
    max_candidates: int = 8
    equivalence: float = 2.0    # candidates within this factor of the best cost are equivalent
    cost_floor: float = 1e-8    # ... or within this absolute cost


def _relative_residuals(model: np.ndarray, obs: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return (model - obs) / scale


def _local_minima(cost: np.ndarray) -> list[tuple[int, int]]:
    padded = np.pad(cost, 1, constant_values=np.inf)
    center = padded[1:-1, 1:-1]
    is_min = np.isfinite(center)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            nb = padded[1 + di : padded.shape[0] - 1 + di, 1 + dj : padded.shape[1] - 1 + dj]
            is_min &= center <= nb
    idx = np.argwhere(is_min)
    order = np.argsort(cost[is_min])
    return [tuple(i) for i in idx[order]]


def localize(amp4, f_detected: float, params: ForwardModelParams,
             hypotheses: Sequence[str] = ("longitudinal", "transverse"),
             grid: LocalizationGrid = LocalizationGrid()) -> GeometryEstimate:
    obs = np.asarray(amp4, dtype=float).reshape(4)
    if np.all(obs <= params.floors * (1.0 + 1e-9)):
        return GeometryEstimate(f_detected, math.inf, 0.0, None, 0.0, False)
    scale = np.maximum(obs, 1e-12 * max(obs.max(), 1e-300))
    axis = classify_axis(obs) if np.any(obs > 0) else None

    Ls = np.arange(grid.L_min, grid.L_max + 0.5 * grid.step, grid.step)
    Ts = np.arange(0.0, grid.T_max + 0.5 * grid.step, grid.step)
    LL, TT = np.meshgrid(Ls, Ts, indexing="ij")
    outside = np.hypot(LL, TT) > params.sphere_radius * 1.001

    candidates = []
    for drive in hypotheses:
        src = _source(params, drive, None)
        cost = np.full(LL.shape, np.inf)
        w = _inplane_envelope(params, src, LL[outside], TT[outside])
        model = _channel_amplitudes(params, w)
        cost[outside] = np.sum(((model - obs) / scale) ** 2, axis=-1)

        def resid(p, src=src):
            L, T = p
            if L <= 0 or math.hypot(L, T) <= src.sphere_radius * 1.001:
                return np.full(4, np.nan)
            m = _channel_amplitudes(params, _inplane_envelope(params, src, L, abs(T)))[0]
            return _relative_residuals(m, obs, scale)

        for i, j in _local_minima(cost)[: grid.max_candidates]:
            # dA/dT vanishes on the axis, so never seed exactly at T = 0
            seed = [LL[i, j], max(TT[i, j], 0.5 * grid.step)]
            res = gauss_newton(resid, seed, raise_on_failure=False)
            L_hat, T_hat = float(res.x[0]), abs(float(res.x[1]))
            candidates.append((2.0 * res.cost, drive, L_hat, T_hat))

    if not candidates:
        raise DomainError("no admissible grid cell outside the sphere")
    best_cost = min(c[0] for c in candidates)
    equiv = [c for c in candidates if c[0] <= grid.equivalence * best_cost + grid.cost_floor]
    # collapse duplicates that converged onto the same geometry
    unique = []
    for c in sorted(equiv, key=lambda c: (c[3] / c[2], c[0])):
        if not any(u[1] == c[1] and abs(u[2] - c[2]) < 1e-4 and abs(u[3] - c[3]) < 1e-4 for u in unique):
            unique.append(c)
    cost, drive, L_hat, T_hat = unique[0]
    rng = operational_range(params, drive=drive) if np.all(params.floors > 0) else math.inf
    return GeometryEstimate(
        frequency=f_detected,
        L_hat=L_hat,
        T_abs_hat=T_hat,
        axis=axis.axis if axis else None,
        residual=math.sqrt(cost / 4.0),
        in_range=L_hat <= rng,
        drive=drive,
        axis_ratio=axis.ratio if axis else math.nan,
        n_equivalent=len(unique) - 1,
        candidates=unique,
    )
