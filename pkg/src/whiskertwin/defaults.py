"""Scenario defaults for the underwater rig.

The sphere size and drive speed are not known for the physical rig; they
are free scenario parameters.  ``DRAG_GAIN``, ``CROSS_COUPLING`` and
``FLOOR_V`` are the output of ``experiment.fitting.fit_default_params`` on
the default anchors, frozen here; ``tests/test_fitting.py`` re-runs the fit
and checks these values.
"""

from __future__ import annotations

from .flowfield import DipoleSource
from .localization import ForwardModelParams
from .sensor_model import (
    RIG_LONGITUDINAL,
    RIG_TRANSVERSE,
    STATIC_GAIN,
    UNDERWATER_GAIN,
    ChannelCalibration,
    DragModel,
    ReadoutChain,
)

SPHERE_RADIUS = 0.005       # m
VELOCITY_AMPLITUDE = 0.1    # m/s
DRIVE_FREQUENCY = 10.0      # Hz
ANCHOR_L = 0.020            # m

DRAG_GAIN = 16.55558805501169      # N per (m/s)
CROSS_COUPLING = 0.3573312777218157
FLOOR_V = 0.11827934362734052      # V, all channels


def calibration() -> ChannelCalibration:
    return ChannelCalibration()


def static_chain() -> ReadoutChain:
    return ReadoutChain(amplifier_gain=STATIC_GAIN)


def fatigue_chain() -> ReadoutChain:
    return ReadoutChain(amplifier_gain=STATIC_GAIN, sample_rate=100.0)


def underwater_chain() -> ReadoutChain:
    return ReadoutChain(amplifier_gain=UNDERWATER_GAIN)


def drag() -> DragModel:
    return DragModel(DRAG_GAIN, CROSS_COUPLING)


def source(drive: str = "longitudinal", frequency: float = DRIVE_FREQUENCY) -> DipoleSource:
    axis = {"longitudinal": RIG_LONGITUDINAL, "transverse": RIG_TRANSVERSE}[drive]
    return DipoleSource([0.0, 0.0, 0.0], axis, SPHERE_RADIUS, VELOCITY_AMPLITUDE, frequency)


def forward_params() -> ForwardModelParams:
    return ForwardModelParams.from_chain(
        calibration(), underwater_chain(), drag(), FLOOR_V, SPHERE_RADIUS, VELOCITY_AMPLITUDE
    )
