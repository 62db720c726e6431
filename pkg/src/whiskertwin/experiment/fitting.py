"""Fit the underwater drag/coupling/floor constants to reported rig anchors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..localization import ForwardModelParams, forward_amplitudes, operational_range
from ..sensor_model import ChannelCalibration, DragModel, ReadoutChain
from ..solvers import ConvergenceError, gauss_newton


@dataclass(frozen=True)
class AmplitudeAnchor:
    """Observed amplitude [V] on ``channel`` (1-based) at (L, T) [m]."""

    drive: str
    L: float
    T: float
    channel: int
    volts: float


@dataclass(frozen=True)
class RangeAnchor:
    distance: float              # [m]
    drive: str = "longitudinal"
    threshold_factor: float = 3.0


# Transverse-drive amplitudes at L = 20 mm, T = 0 and the 40-50 mm operating range (midpoint).
REFERENCE_ANCHORS = (
    AmplitudeAnchor("transverse", 0.020, 0.0, 4, 1.41),
    AmplitudeAnchor("transverse", 0.020, 0.0, 1, 0.56),
    RangeAnchor(0.045),
)


@dataclass
class FittedDefaults:
    drag: DragModel
    params: ForwardModelParams
    residuals: dict
    converged: bool

    def config_fragment(self) -> dict:
        return {
            "drag": {
                "linear_drag_gain": self.drag.linear_drag_gain,
                "cross_coupling": self.drag.cross_coupling,
            },
            "localization": {"floor_V": float(self.params.floors[0])},
            "fit_residuals": self.residuals,
        }


def _anchor_name(a) -> str:
    if isinstance(a, RangeAnchor):
        return f"range_{a.drive}_mm"
    return f"A{a.channel}_{a.drive}_L{a.L * 1e3:g}_T{a.T * 1e3:g}"


def fit_default_params(
    anchors=REFERENCE_ANCHORS,
    cal: ChannelCalibration | None = None,
    chain: ReadoutChain | None = None,
    sphere_radius: float = 0.005,
    velocity_amplitude: float = 0.1,
) -> FittedDefaults:
    """Least-squares fit of drag gain, cross-axis coupling and a common floor.

    The source speed is held fixed: only the product drag_gain * U is
    observable from amplitudes, so U is the gauge.  Channel gains follow
    from the drag gain through the bridge small-signal gain and |K|.
    """
    anchors = tuple(anchors)
    if not anchors:
        raise ValueError("anchor set is empty")
    cal = cal or ChannelCalibration()
    chain = chain or ReadoutChain()
    amp_anchors = [a for a in anchors if isinstance(a, AmplitudeAnchor)]
    if not amp_anchors:
        raise ValueError("at least one amplitude anchor is needed to set the scale")

    def build(p):
        C, kappa, floor = np.exp(p)
        drag = DragModel(C, kappa)
        params = ForwardModelParams.from_chain(cal, chain, drag, floor, sphere_radius, velocity_amplitude)
        return drag, params

    def resid(p):
        _, params = build(p)
        out = []
        for a in anchors:
            if isinstance(a, RangeAnchor):
                r = operational_range(params, a.threshold_factor, a.drive)
                out.append((r - a.distance) / a.distance)
            else:
                A = forward_amplitudes(params, a.L, a.T, a.drive)[a.channel - 1]
                out.append((A - a.volts) / a.volts)
        return np.array(out)

    # seed: unit drag gain rescaled to the strongest anchor, 10% floor
    ref = max(amp_anchors, key=lambda a: a.volts)
    _, unit = build(np.log([1.0, 0.3, 1e-12]))
    unit_amp = forward_amplitudes(unit, ref.L, ref.T, ref.drive)[ref.channel - 1]
    x0 = np.log([ref.volts / unit_amp, 0.3, 0.05 * ref.volts])
    try:
        res = gauss_newton(resid, x0, max_iter=300)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"default-parameter fit did not converge; residuals {dict(zip(map(_anchor_name, anchors), exc.best.residuals.round(6)))}",
            exc.best,
        ) from None
    drag, params = build(res.x)
    residuals = {_anchor_name(a): float(r) for a, r in zip(anchors, res.residuals)}
    return FittedDefaults(drag, params, residuals, res.converged)
