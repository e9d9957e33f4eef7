"""Linear single-track vehicle model with multiplicative actuator/tire faults.

States (SI units throughout):

    a_x    longitudinal acceleration [m/s^2]   (first-order lag on the command)
    v_x    longitudinal velocity     [m/s]
    v_y    lateral velocity          [m/s]
    d_y    lateral position          [m]
    r      yaw rate                  [rad/s]
    theta  heading                   [rad]
    d_x    longitudinal position     [m]

Inputs are the commanded acceleration a_x_c [m/s^2] and the front steering
angle delta [rad].  Two loss-of-effectiveness factors enter the lateral
dynamics: f1 scales the realized steering angle (power steering degradation)
and f2 scales the rear cornering stiffness (e.g. a deflated rear tire).
f1 = f2 = 1 is the healthy vehicle.

The lateral model divides by v_x, so it is only valid above a floor velocity;
the discrete step clamps v_x there and callers must not evaluate the
derivatives below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Model singular below this forward velocity [m/s]; also the "parked" speed.
V_X_MIN = 1.26

# State vector indices, order fixed across the package.
IDX_A_X, IDX_V_X, IDX_V_Y, IDX_D_Y, IDX_R, IDX_THETA, IDX_D_X = range(7)

STATE_NAMES = ("a_x", "v_x", "v_y", "d_y", "r", "theta", "d_x")

N_STATES = 7
N_INPUTS = 2


class SingularVelocityError(ValueError):
    """Lateral dynamics evaluated below the velocity floor."""


@dataclass(frozen=True)
class VehicleParams:
    """Single-track parameters of a mid-size sedan.

    c_alpha_f, c_alpha_r : front/rear cornering stiffness [N/rad]
    l_f, l_r             : CoG to front/rear axle [m]
    mass                 : vehicle mass [kg]
    i_z                  : yaw moment of inertia [kg m^2]
    """

    c_alpha_f: float = 120e3
    c_alpha_r: float = 220e3
    l_f: float = 1.33
    l_r: float = 1.47
    mass: float = 1845.0
    i_z: float = 3580.0

    def __post_init__(self) -> None:
        for name in ("c_alpha_f", "c_alpha_r", "l_f", "l_r", "mass", "i_z"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"VehicleParams.{name} must be > 0")


@dataclass(frozen=True)
class FaultVector:
    """Multiplicative effectiveness factors, 1.0 = healthy, in (0, 1].

    f1 scales the realized steering angle, f2 the rear cornering stiffness.
    """

    f1: float = 1.0
    f2: float = 1.0

    def __post_init__(self) -> None:
        for name in ("f1", "f2"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"FaultVector.{name} must be in (0, 1], got {value}")


@dataclass(frozen=True)
class ActuationModel:
    """Discrete first-order lag a_x(k+1) = s_dt*a_x(k) + g_dt*a_x_c(k).

    Unit DC gain is enforced (g_dt = 1 - s_dt), so a held command converges
    to itself.  Build from a continuous time constant via `from_lag`.
    """

    s_dt: float
    g_dt: float
    dt: float

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("ActuationModel.dt must be > 0")
        if not 0.0 <= self.s_dt < 1.0:
            raise ValueError("ActuationModel.s_dt must be in [0, 1)")
        if abs(self.g_dt - (1.0 - self.s_dt)) > 1e-12:
            raise ValueError("ActuationModel requires g_dt = 1 - s_dt (unit DC gain)")

    @classmethod
    def from_lag(cls, dt: float, tau: float = 0.1) -> "ActuationModel":
        """Forward-Euler discretization of tau*da_x/dt = a_x_c - a_x."""
        if tau <= 0.0:
            raise ValueError("actuation time constant must be > 0")
        if dt >= tau:
            raise ValueError("dt must be smaller than the actuation time constant")
        return cls(s_dt=1.0 - dt / tau, g_dt=dt / tau, dt=dt)


@dataclass(frozen=True)
class ControlInput:
    """Commanded acceleration [m/s^2] and front steering angle [rad]."""

    a_x_c: float = 0.0
    delta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.a_x_c, self.delta])


@dataclass(frozen=True)
class VehicleState:
    a_x: float = 0.0
    v_x: float = V_X_MIN
    v_y: float = 0.0
    d_y: float = 0.0
    r: float = 0.0
    theta: float = 0.0
    d_x: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.a_x, self.v_x, self.v_y, self.d_y, self.r, self.theta, self.d_x]
        )

    @classmethod
    def from_array(cls, x: np.ndarray) -> "VehicleState":
        if len(x) != N_STATES:
            raise ValueError(f"expected {N_STATES} states, got {len(x)}")
        return cls(*(float(v) for v in x))


def _check_velocity(v_x: float) -> None:
    if v_x < V_X_MIN:
        raise SingularVelocityError(
            f"lateral model invalid at v_x = {v_x:.4g} m/s (floor {V_X_MIN} m/s)"
        )


def lateral_derivatives(
    state: VehicleState,
    delta: float,
    params: VehicleParams,
    fault: FaultVector = FaultVector(),
) -> tuple[float, float]:
    """Continuous-time (dv_y/dt, dr/dt) of the faulty single-track model.

    The fault enters as an effective rear stiffness f2*c_alpha_r and an
    effective steering angle f1*delta.
    """
    _check_velocity(state.v_x)
    c_f = params.c_alpha_f
    c_r = params.c_alpha_r * fault.f2
    m, i_z, l_f, l_r = params.mass, params.i_z, params.l_f, params.l_r
    v_x, v_y, r = state.v_x, state.v_y, state.r

    v_y_dot = (
        -(c_f + c_r) / (m * v_x) * v_y
        + ((l_r * c_r - l_f * c_f) / (m * v_x) - v_x) * r
        + c_f / m * delta * fault.f1
    )
    r_dot = (
        (l_r * c_r - l_f * c_f) / (i_z * v_x) * v_y
        - (l_f**2 * c_f + l_r**2 * c_r) / (i_z * v_x) * r
        + l_f * c_f / i_z * delta * fault.f1
    )
    return v_y_dot, r_dot


def lateral_acceleration(
    state: VehicleState,
    delta: float,
    params: VehicleParams,
    fault_assumed: FaultVector = FaultVector(),
) -> float:
    """Lateral acceleration a_y [m/s^2] as seen by the (possibly faulty) model.

    This is v_y_dot + v_x*r, i.e. the tire-force part of the lateral
    acceleration, which is what the comfort/safety bound |a_y| <= 2 limits.
    """
    v_y_dot, _ = lateral_derivatives(state, delta, params, fault_assumed)
    return v_y_dot + state.v_x * state.r


def step_discrete(
    state: VehicleState,
    u: ControlInput,
    params: VehicleParams,
    fault: FaultVector,
    act: ActuationModel,
) -> VehicleState:
    """One forward-Euler step of the discrete plant.

    v_x is clamped at the floor velocity; when the clamp engages, a_x is
    zeroed so the lag does not keep pushing against the clamp.
    """
    dt = act.dt
    v_y_dot, r_dot = lateral_derivatives(state, u.delta, params, fault)
    sin_th = math.sin(state.theta)
    cos_th = math.cos(state.theta)

    a_x_next = act.s_dt * state.a_x + act.g_dt * u.a_x_c
    v_x_next = state.v_x + state.a_x * dt
    if v_x_next < V_X_MIN:
        v_x_next = V_X_MIN
        a_x_next = 0.0
    return VehicleState(
        a_x=a_x_next,
        v_x=v_x_next,
        v_y=state.v_y + v_y_dot * dt,
        d_y=state.d_y + (state.v_y * cos_th + state.v_x * sin_th) * dt,
        r=state.r + r_dot * dt,
        theta=state.theta + state.r * dt,
        d_x=state.d_x + (state.v_x * cos_th - state.v_y * sin_th) * dt,
    )


def hits_velocity_floor(state: VehicleState, act: ActuationModel) -> bool:
    """True when the next step_discrete from `state` engages the v_x clamp."""
    return state.v_x + state.a_x * act.dt < V_X_MIN


def dynamics_jacobians(
    state: VehicleState,
    u: ControlInput,
    params: VehicleParams,
    fault: FaultVector,
    act: ActuationModel,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (A, B) of the unclamped step_discrete map.

    A is d(x+)/dx (7x7), B is d(x+)/du (7x2), evaluated at (state, u).
    Not valid at states where the velocity clamp engages (the map is not
    differentiable across the clamp boundary).
    """
    _check_velocity(state.v_x)
    dt = act.dt
    c_f = params.c_alpha_f
    c_r = params.c_alpha_r * fault.f2
    m, i_z, l_f, l_r = params.mass, params.i_z, params.l_f, params.l_r
    v_x, v_y, r = state.v_x, state.v_y, state.r
    sin_th = math.sin(state.theta)
    cos_th = math.cos(state.theta)

    # Partials of the continuous lateral derivatives.
    dvyd_dvx = (c_f + c_r) / (m * v_x**2) * v_y + (
        -(l_r * c_r - l_f * c_f) / (m * v_x**2) - 1.0
    ) * r
    dvyd_dvy = -(c_f + c_r) / (m * v_x)
    dvyd_dr = (l_r * c_r - l_f * c_f) / (m * v_x) - v_x
    drd_dvx = (
        -(l_r * c_r - l_f * c_f) / (i_z * v_x**2) * v_y
        + (l_f**2 * c_f + l_r**2 * c_r) / (i_z * v_x**2) * r
    )
    drd_dvy = (l_r * c_r - l_f * c_f) / (i_z * v_x)
    drd_dr = -(l_f**2 * c_f + l_r**2 * c_r) / (i_z * v_x)

    A = np.zeros((N_STATES, N_STATES))
    A[IDX_A_X, IDX_A_X] = act.s_dt
    A[IDX_V_X, IDX_A_X] = dt
    A[IDX_V_X, IDX_V_X] = 1.0
    A[IDX_V_Y, IDX_V_X] = dt * dvyd_dvx
    A[IDX_V_Y, IDX_V_Y] = 1.0 + dt * dvyd_dvy
    A[IDX_V_Y, IDX_R] = dt * dvyd_dr
    A[IDX_D_Y, IDX_V_X] = dt * sin_th
    A[IDX_D_Y, IDX_V_Y] = dt * cos_th
    A[IDX_D_Y, IDX_D_Y] = 1.0
    A[IDX_D_Y, IDX_THETA] = dt * (v_x * cos_th - v_y * sin_th)
    A[IDX_R, IDX_V_X] = dt * drd_dvx
    A[IDX_R, IDX_V_Y] = dt * drd_dvy
    A[IDX_R, IDX_R] = 1.0 + dt * drd_dr
    A[IDX_THETA, IDX_R] = dt
    A[IDX_THETA, IDX_THETA] = 1.0
    A[IDX_D_X, IDX_V_X] = dt * cos_th
    A[IDX_D_X, IDX_V_Y] = -dt * sin_th
    A[IDX_D_X, IDX_THETA] = dt * (-v_x * sin_th - v_y * cos_th)
    A[IDX_D_X, IDX_D_X] = 1.0

    B = np.zeros((N_STATES, N_INPUTS))
    B[IDX_A_X, 0] = act.g_dt
    B[IDX_V_Y, 1] = dt * c_f / m * fault.f1
    B[IDX_R, 1] = dt * l_f * c_f / i_z * fault.f1
    return A, B
