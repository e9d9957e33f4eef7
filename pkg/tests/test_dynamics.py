import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from failsafe_mpc.dynamics import (
    ActuationModel,
    ControlInput,
    FaultVector,
    SingularVelocityError,
    V_X_MIN,
    VehicleParams,
    VehicleState,
    dynamics_jacobians,
    lateral_acceleration,
    lateral_derivatives,
    step_discrete,
)

PARAMS = VehicleParams()
HEALTHY = FaultVector()
ACT = ActuationModel.from_lag(dt=0.01, tau=0.1)


def reference_step(x, u, p, f, s_dt, g_dt, dt):
    """Independent one-step recursion, written directly from the model
    equations with no shared code.  x = (a_x, v_x, v_y, d_y, r, theta, d_x),
    u = (a_x_c, delta)."""
    a_x, v_x, v_y, d_y, r, theta, d_x = x
    a_x_c, delta = u
    c_f, c_r = p.c_alpha_f, p.c_alpha_r
    v_y_dot = (
        -(c_f + c_r * f.f2) / (p.mass * v_x) * v_y
        + ((p.l_r * c_r * f.f2 - p.l_f * c_f) / (p.mass * v_x) - v_x) * r
        + c_f / p.mass * delta * f.f1
    )
    r_dot = (
        (p.l_r * c_r * f.f2 - p.l_f * c_f) / (p.i_z * v_x) * v_y
        - (p.l_f**2 * c_f + p.l_r**2 * c_r * f.f2) / (p.i_z * v_x) * r
        + p.l_f * c_f / p.i_z * delta * f.f1
    )
    return np.array(
        [
            s_dt * a_x + g_dt * a_x_c,
            v_x + a_x * dt,
            v_y + v_y_dot * dt,
            d_y + (v_y * math.cos(theta) + v_x * math.sin(theta)) * dt,
            r + r_dot * dt,
            theta + r * dt,
            d_x + (v_x * math.cos(theta) - v_y * math.sin(theta)) * dt,
        ]
    )


def random_feasible_states(rng, n):
    """Random states/inputs away from the velocity floor and clamp boundary."""
    for _ in range(n):
        state = VehicleState(
            a_x=rng.uniform(-3.5, 1.5),
            v_x=rng.uniform(2.0, 33.0),
            v_y=rng.uniform(-2.0, 2.0),
            d_y=rng.uniform(-4.0, 4.0),
            r=rng.uniform(-0.5, 0.5),
            theta=rng.uniform(-0.3, 0.3),
            d_x=rng.uniform(-10.0, 10.0),
        )
        u = ControlInput(a_x_c=rng.uniform(-3.5, 1.5), delta=rng.uniform(-0.17, 0.17))
        fault = FaultVector(f1=rng.uniform(0.3, 1.0), f2=rng.uniform(0.3, 1.0))
        yield state, u, fault


def test_lateral_derivatives_straight_line_equilibrium():
    state = VehicleState(v_x=25.0)
    assert lateral_derivatives(state, 0.0, PARAMS, HEALTHY) == (0.0, 0.0)


def test_lateral_derivatives_small_steer():
    # Pure steering contribution at v_y = r = 0: c_f/m * delta, l_f*c_f/i_z * delta.
    state = VehicleState(v_x=25.0)
    v_y_dot, r_dot = lateral_derivatives(state, 0.01, PARAMS, HEALTHY)
    assert v_y_dot == pytest.approx(1200.0 / 1845.0, rel=1e-12)
    assert r_dot == pytest.approx(1596.0 / 3580.0, rel=1e-12)


def test_steering_fault_halves_steer_gain():
    state = VehicleState(v_x=25.0)
    full = lateral_derivatives(state, 0.01, PARAMS, HEALTHY)
    half = lateral_derivatives(state, 0.01, PARAMS, FaultVector(f1=0.5))
    assert half[0] == pytest.approx(0.5 * full[0], rel=1e-12)
    assert half[1] == pytest.approx(0.5 * full[1], rel=1e-12)


@given(
    v_x=st.floats(2.0, 33.0),
    v_y=st.floats(-2.0, 2.0),
    r=st.floats(-0.5, 0.5),
    delta=st.floats(-0.1, 0.1),
    lo=st.floats(0.2, 0.9),
    hi=st.floats(0.2, 1.0),
)
@settings(max_examples=100, deadline=None)
def test_fault_enters_affinely(v_x, v_y, r, delta, lo, hi):
    # Both derivatives are affine in each fault factor, so the value at the
    # midpoint of two fault levels must equal the average of the endpoints.
    if lo > hi:
        lo, hi = hi, lo
    state = VehicleState(v_x=v_x, v_y=v_y, r=r)
    for key in ("f1", "f2"):
        f_lo = FaultVector(**{key: lo})
        f_hi = FaultVector(**{key: hi})
        f_mid = FaultVector(**{key: 0.5 * (lo + hi)})
        end_lo = lateral_derivatives(state, delta, PARAMS, f_lo)
        end_hi = lateral_derivatives(state, delta, PARAMS, f_hi)
        mid = lateral_derivatives(state, delta, PARAMS, f_mid)
        for i in range(2):
            assert mid[i] == pytest.approx(
                0.5 * (end_lo[i] + end_hi[i]), abs=1e-9, rel=1e-9
            )


def test_lateral_derivatives_rejects_low_speed():
    with pytest.raises(SingularVelocityError):
        lateral_derivatives(VehicleState(v_x=1.0), 0.0, PARAMS, HEALTHY)


def test_fault_vector_validation():
    with pytest.raises(ValueError):
        FaultVector(f1=0.0)
    with pytest.raises(ValueError):
        FaultVector(f2=1.5)


def test_step_constant_speed_straight():
    state = VehicleState(v_x=25.0, d_x=3.0)
    nxt = step_discrete(state, ControlInput(), PARAMS, HEALTHY, ACT)
    assert nxt.d_x == pytest.approx(3.0 + 25.0 * ACT.dt, rel=1e-15)
    assert (nxt.a_x, nxt.v_x, nxt.v_y, nxt.d_y, nxt.r, nxt.theta) == (
        0.0,
        25.0,
        0.0,
        0.0,
        0.0,
        0.0,
    )


def test_actuation_lag_first_step():
    act = ActuationModel(s_dt=0.9, g_dt=0.1, dt=0.01)
    state = VehicleState(v_x=25.0)
    nxt = step_discrete(state, ControlInput(a_x_c=1.0), PARAMS, HEALTHY, act)
    assert nxt.a_x == pytest.approx(0.1, rel=1e-15)


def test_actuation_unit_dc_gain():
    # Held command: a_x converges to a_x_c.
    state = VehicleState(v_x=25.0)
    u = ControlInput(a_x_c=1.0)
    for _ in range(200):
        state = step_discrete(state, u, PARAMS, HEALTHY, ACT)
    assert abs(state.a_x - 1.0) < 1e-6


def test_actuation_model_rejects_non_unit_gain():
    with pytest.raises(ValueError):
        ActuationModel(s_dt=0.9, g_dt=0.2, dt=0.01)


def test_step_matches_reference_recursion():
    rng = np.random.default_rng(7)
    for state, u, fault in random_feasible_states(rng, 50):
        got = step_discrete(state, u, PARAMS, fault, ACT).as_array()
        want = reference_step(
            state.as_array(), u.as_array(), PARAMS, fault, ACT.s_dt, ACT.g_dt, ACT.dt
        )
        np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-15)


def test_velocity_floor_clamp():
    state = VehicleState(a_x=-3.5, v_x=1.27)
    nxt = step_discrete(state, ControlInput(a_x_c=-3.5), PARAMS, HEALTHY, ACT)
    assert nxt.v_x == V_X_MIN
    assert nxt.a_x == 0.0


def test_euler_first_order_convergence():
    # Halving dt should roughly halve the error against a fine reference.
    u = ControlInput(a_x_c=0.3, delta=0.005)
    x0 = VehicleState(v_x=20.0)

    def propagate(dt, t_end=1.0):
        act = ActuationModel.from_lag(dt=dt, tau=0.1)
        state = x0
        for _ in range(round(t_end / dt)):
            state = step_discrete(state, u, PARAMS, HEALTHY, act)
        return state.as_array()

    ref = propagate(1.0 / 6400)
    errs = [np.linalg.norm(propagate(dt) - ref) for dt in (0.04, 0.02, 0.01)]
    assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.35)
    assert errs[1] / errs[2] == pytest.approx(2.0, abs=0.35)


def test_jacobians_match_finite_differences():
    rng = np.random.default_rng(11)
    eps = 1e-6
    for state, u, fault in random_feasible_states(rng, 25):
        A, B = dynamics_jacobians(state, u, PARAMS, fault, ACT)
        x0 = state.as_array()
        u0 = u.as_array()

        def f(x, uu):
            return step_discrete(
                VehicleState.from_array(x),
                ControlInput(*uu),
                PARAMS,
                fault,
                ACT,
            ).as_array()

        A_fd = np.zeros_like(A)
        for j in range(7):
            dx = np.zeros(7)
            dx[j] = eps * max(1.0, abs(x0[j]))
            A_fd[:, j] = (f(x0 + dx, u0) - f(x0 - dx, u0)) / (2 * dx[j])
        B_fd = np.zeros_like(B)
        for j in range(2):
            du = np.zeros(2)
            du[j] = eps
            B_fd[:, j] = (f(x0, u0 + du) - f(x0, u0 - du)) / (2 * du[j])

        scale_A = np.maximum(np.abs(A_fd), 1.0)
        scale_B = np.maximum(np.abs(B_fd), 1.0)
        assert np.max(np.abs(A - A_fd) / scale_A) < 1e-6
        assert np.max(np.abs(B - B_fd) / scale_B) < 1e-6


def test_jacobian_heading_coupling_at_equilibrium():
    state = VehicleState(v_x=25.0)
    A, B = dynamics_jacobians(state, ControlInput(), PARAMS, HEALTHY, ACT)
    # d(d_y+)/d(theta) = v_x*dt at theta = 0, v_y = 0.
    assert A[3, 5] == pytest.approx(25.0 * ACT.dt, rel=1e-12)
    assert B[0, 0] == pytest.approx(ACT.g_dt, rel=1e-12)


def test_lateral_acceleration_examples():
    # At v_y = r = 0 only the steering term remains: c_f/m * f1 * delta.
    state = VehicleState(v_x=25.0)
    a_y = lateral_acceleration(state, 0.0873, PARAMS, HEALTHY)
    assert a_y == pytest.approx(120e3 / 1845.0 * 0.0873, rel=1e-12)
    a_y_half = lateral_acceleration(state, 0.0873, PARAMS, FaultVector(f1=0.5))
    assert a_y_half == pytest.approx(0.5 * a_y, rel=1e-12)
    # v_x*r term cancels the -v_x*r in v_y_dot: pure yaw gives the tire part.
    spinning = VehicleState(v_x=25.0, v_y=1.0, r=0.1)
    v_y_dot, _ = lateral_derivatives(spinning, 0.0, PARAMS, HEALTHY)
    assert lateral_acceleration(spinning, 0.0, PARAMS, HEALTHY) == pytest.approx(
        v_y_dot + 25.0 * 0.1, rel=1e-12
    )
