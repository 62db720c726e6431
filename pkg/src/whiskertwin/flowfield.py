"""Velocity field of a rigid sphere oscillating in still fluid.

The source is the quasi-static potential-flow doublet: outside the sphere

    v(r, t) = a^3 / (2 |r|^3) * (3 (u . r_hat) r_hat - u) * U * cos(2 pi f t + phase)

where ``u`` is the unit drive axis and ``r`` the offset from the sphere
centre.  Viscosity, wake history and wall reflections are not modelled.
Every point carries one fixed polarisation direction, so the peak-speed
envelope is the time-independent factor in front of the cosine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """A field evaluation was requested at a non-physical point."""


def _as_vec3(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite components: {v}")
    return v


@dataclass(frozen=True)
class DipoleSource:
    """Oscillating sphere.  Lengths in m, speed in m/s, frequency in Hz."""

    center: np.ndarray
    drive_axis: np.ndarray
    sphere_radius: float
    velocity_amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        center = _as_vec3(self.center, "center")
        axis = _as_vec3(self.drive_axis, "drive_axis")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError(f"drive_axis must be a unit vector, |axis| = {np.linalg.norm(axis)!r}")
        if not self.sphere_radius > 0:
            raise ValueError("sphere_radius must be > 0")
        if not self.velocity_amplitude >= 0:
            raise ValueError("velocity_amplitude must be >= 0")
        if not self.frequency > 0:
            raise ValueError("frequency must be > 0")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "drive_axis", axis)

    def replace(self, **changes) -> "DipoleSource":
        fields = dict(
            center=self.center,
            drive_axis=self.drive_axis,
            sphere_radius=self.sphere_radius,
            velocity_amplitude=self.velocity_amplitude,
            frequency=self.frequency,
            phase=self.phase,
        )
        fields.update(changes)
        return DipoleSource(**fields)


@dataclass(frozen=True)
class FlowSample:
    velocity: np.ndarray
    point: np.ndarray
    time: float


def _offset(src: DipoleSource, point) -> tuple[np.ndarray, float]:
    p = _as_vec3(point, "point")
    r = p - src.center
    dist = float(np.linalg.norm(r))
    if dist <= src.sphere_radius:
        raise DomainError(
            f"point {p.tolist()} lies inside the sphere "
            f"(|r| = {dist:.6g} m <= a = {src.sphere_radius:.6g} m)"
        )
    return r, dist


def envelope_vector(src: DipoleSource, point) -> np.ndarray:
    """Peak velocity vector at ``point``; v(t) = envelope * cos(2 pi f t + phase)."""
    r, dist = _offset(src, point)
    r_hat = r / dist
    u = src.drive_axis
    shape = 3.0 * np.dot(u, r_hat) * r_hat - u
    return src.velocity_amplitude * src.sphere_radius**3 / (2.0 * dist**3) * shape


def dipole_velocity(src: DipoleSource, point, t: float) -> FlowSample:
    w = envelope_vector(src, point)
    c = np.cos(2.0 * np.pi * src.frequency * t + src.phase)
    return FlowSample(velocity=w * c, point=np.asarray(point, dtype=float), time=float(t))


def peak_speed_envelope(src: DipoleSource, point) -> float:
    """Maximum over one period of |dipole_velocity| at ``point``."""
    return float(np.linalg.norm(envelope_vector(src, point)))


def envelope_field(src: DipoleSource, points) -> np.ndarray:
    """Vectorised envelope_vector over an (n, 3) array of points."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    r = p - src.center
    dist = np.linalg.norm(r, axis=1)
    inside = dist <= src.sphere_radius
    if np.any(inside):
        bad = p[np.argmax(inside)]
        raise DomainError(f"point {bad.tolist()} lies inside the sphere (a = {src.sphere_radius:.6g} m)")
    r_hat = r / dist[:, None]
    proj = r_hat @ src.drive_axis
    shape = 3.0 * proj[:, None] * r_hat - src.drive_axis
    scale = src.velocity_amplitude * src.sphere_radius**3 / (2.0 * dist**3)
    return scale[:, None] * shape
