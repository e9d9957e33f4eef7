"""Quintic lateral trajectory and NMPC reference sampling.

The lane-change path is a fifth-order polynomial in time fitted to position,
velocity and acceleration at both ends (six boundary conditions, unique
solution).  With zero start/end derivatives this gives the classic smooth
S-curve with no lateral acceleration demand at either end.

`sample_reference` turns the path into the per-stage reference triplet
(z_v_x, z_d_y, z_theta) the NMPC tracks.  The heading reference is the path
slope converted to a heading angle at the current travel speed,
z_theta = atan(dy/dt / v), and the path is held at its boundary values
outside [0, duration].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuinticPath:
    """Polynomial y(t) = sum(coeffs[i] * t^i), valid on [0, duration]."""

    coeffs: np.ndarray = field(repr=False)
    duration: float = 0.0
    y_start: float = 0.0
    y_goal: float = 0.0

    def position(self, t: float) -> float:
        t = min(max(t, 0.0), self.duration)
        c = self.coeffs
        return float(
            c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))))
        )

    def slope(self, t: float) -> float:
        """dy/dt [m/s], held constant outside [0, duration]."""
        t = min(max(t, 0.0), self.duration)
        c = self.coeffs
        return float(
            c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])))
        )


@dataclass(frozen=True)
class ReferencePoint:
    """One NMPC tracking stage: velocity, lateral position, heading."""

    z_v_x: float
    z_d_y: float
    z_theta: float


def fit_quintic(
    y0: float,
    y0_dot: float,
    y0_ddot: float,
    yf: float,
    yf_dot: float,
    yf_ddot: float,
    duration: float,
) -> QuinticPath:
    """Fit y(t) on [0, T] to position/velocity/acceleration at both ends."""
    if duration <= 0.0:
        raise ValueError("quintic duration must be > 0")
    T = duration
    # Rows: y(0), y'(0), y''(0), y(T), y'(T), y''(T).
    M = np.array(
        [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 2.0, 0.0, 0.0, 0.0],
            [1.0, T, T**2, T**3, T**4, T**5],
            [0.0, 1.0, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
            [0.0, 0.0, 2.0, 6 * T, 12 * T**2, 20 * T**3],
        ]
    )
    rhs = np.array([y0, y0_dot, y0_ddot, yf, yf_dot, yf_ddot])
    coeffs = np.linalg.solve(M, rhs)
    coeffs.setflags(write=False)
    return QuinticPath(coeffs=coeffs, duration=T, y_start=y0, y_goal=yf)


def sample_reference(
    path: QuinticPath,
    t_now: float,
    goal_velocity: float,
    n: int,
    dt: float,
    v_for_heading: float | None = None,
) -> list[ReferencePoint]:
    """Reference triplets at t_now + k*dt for k = 1..n.

    The velocity reference is the (piecewise-constant) goal velocity; the
    heading reference uses the travel speed `v_for_heading` (defaults to the
    goal velocity) so that following the path slope at that speed yields the
    referenced heading.  Past the path end the terminal point is held.
    """
    if n < 1:
        raise ValueError("need at least one reference stage")
    if dt <= 0.0:
        raise ValueError("reference sampling requires dt > 0")
    v = goal_velocity if v_for_heading is None else v_for_heading
    if v <= 0.0:
        raise ValueError("heading reference requires a positive travel speed")
    refs = []
    for k in range(1, n + 1):
        t = t_now + k * dt
        refs.append(
            ReferencePoint(
                z_v_x=goal_velocity,
                z_d_y=path.position(t),
                z_theta=math.atan(path.slope(t) / v),
            )
        )
    return refs
