import math

import numpy as np
import pytest

from failsafe_mpc.dynamics import (
    ActuationModel,
    ControlInput,
    FaultVector,
    VehicleParams,
    VehicleState,
    step_discrete,
)
from failsafe_mpc.ocp import (
    MpcController,
    Ocp,
    OcpBounds,
    OcpConfig,
    OcpWeights,
    build_ocp,
    linearized_qp_data,
    reconfigure,
    solve,
    stage_cost,
    _rollout,
    _tracking_cost,
)
from failsafe_mpc.trajectory import ReferencePoint, fit_quintic, sample_reference

PARAMS = VehicleParams()


def make_refs(n, z_v_x, z_d_y=0.0, z_theta=0.0):
    return [ReferencePoint(z_v_x, z_d_y, z_theta)] * n


def test_stage_cost_on_reference_is_zero():
    x = VehicleState(v_x=25.0)
    assert stage_cost(x, ControlInput(), ReferencePoint(25.0, 0.0, 0.0), OcpWeights()) == 0.0


def test_stage_cost_velocity_error():
    x = VehicleState(v_x=24.0)
    assert stage_cost(
        x, ControlInput(), ReferencePoint(25.0, 0.0, 0.0), OcpWeights()
    ) == pytest.approx(10.0, rel=1e-12)


def test_stage_cost_control_effort():
    x = VehicleState(v_x=25.0)
    u = ControlInput(a_x_c=2.0, delta=0.1)
    assert stage_cost(
        x, u, ReferencePoint(25.0, 0.0, 0.0), OcpWeights()
    ) == pytest.approx(2.01, rel=1e-12)


def test_weights_require_positive_control_terms():
    with pytest.raises(ValueError):
        OcpWeights(a_x=0.0)
    with pytest.raises(ValueError):
        OcpWeights(v_x=-1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        OcpConfig(n_pred=0)
    with pytest.raises(ValueError):
        OcpConfig(n_pred=10, n_ctrl=11)
    with pytest.raises(ValueError):
        OcpBounds(v_x_min=2.0, v_x_max=1.0)


def test_reconfigure_scales_steering_range():
    cfg = OcpConfig()
    re = reconfigure(cfg, FaultVector(f1=0.5, f2=0.5))
    assert re.fault_assumed == FaultVector(f1=0.5, f2=0.5)
    assert re.bounds.delta_max == pytest.approx(0.0873 / 0.5, rel=1e-12)
    assert re.bounds.delta_rate_max == pytest.approx(0.0818 / 0.5, rel=1e-12)
    # The effort weight follows the variable substitution: pricing commanded
    # steering at f1^2 its old weight keeps pricing realized steering as is.
    assert re.weights.delta == pytest.approx(cfg.weights.delta * 0.25, rel=1e-12)
    # Other limits and weights untouched.
    assert re.bounds.a_x_c_min == cfg.bounds.a_x_c_min
    assert re.weights.d_y == cfg.weights.d_y
    # Healthy fault vector is the identity.
    same = reconfigure(cfg, FaultVector())
    assert same.bounds == cfg.bounds
    assert same.weights == cfg.weights


def test_build_ocp_dimensions_and_validation():
    cfg = OcpConfig()
    ocp = build_ocp(VehicleState(v_x=25.0), make_refs(30, 25.0), cfg)
    assert ocp.n_control_vars == 60
    with pytest.raises(ValueError):
        build_ocp(VehicleState(v_x=25.0), make_refs(29, 25.0), cfg)
    with pytest.raises(ValueError):
        build_ocp(VehicleState(v_x=1.0), make_refs(30, 25.0), cfg)
    with pytest.raises(ValueError):
        build_ocp(
            VehicleState(v_x=25.0), make_refs(30, 25.0), cfg, ControlInput(delta=0.2)
        )


def test_equilibrium_yields_zero_control():
    cfg = OcpConfig()
    ocp = build_ocp(VehicleState(v_x=25.0), make_refs(30, 25.0), cfg)
    sol = solve(ocp)
    assert sol.status == "converged"
    assert max(abs(u.a_x_c) for u in sol.controls) <= 1e-6
    assert max(abs(u.delta) for u in sol.controls) <= 1e-6
    assert sol.cost <= 1e-9
    assert sol.slack == 0.0


def test_prediction_is_exact_rollout():
    cfg = OcpConfig()
    path = fit_quintic(0.0, 0.0, 0.0, -3.5, 0.0, 0.0, duration=4.5)
    refs = sample_reference(path, 0.5, 20.0, n=30, dt=0.01, v_for_heading=20.0)
    ocp = build_ocp(VehicleState(v_x=20.0), refs, cfg)
    sol = solve(ocp)
    state = ocp.x_init
    for k in range(cfg.n_pred):
        state = step_discrete(
            state, sol.controls[k], cfg.params, cfg.fault_assumed, cfg.actuation
        )
        gap = np.abs(state.as_array() - sol.predicted_states[k + 1].as_array())
        assert np.max(gap) <= 1e-8


def test_qp_gradient_matches_finite_differences():
    cfg = OcpConfig(n_pred=8, n_ctrl=8, dt=0.02)
    path = fit_quintic(0.0, 0.0, 0.0, -2.0, 0.0, 0.0, duration=3.0)
    refs = sample_reference(path, 0.3, 14.0, n=8, dt=0.02, v_for_heading=15.0)
    ocp = build_ocp(VehicleState(v_x=15.0), refs, cfg)
    rng = np.random.default_rng(2)
    u_blocks = np.column_stack(
        [rng.uniform(-1.0, 0.5, size=8), rng.uniform(-0.05, 0.05, size=8)]
    )
    _, q, _, _, _ = linearized_qp_data(ocp, u_blocks)

    def cost_at(u_bl):
        states, _ = _rollout(ocp, u_bl)
        return _tracking_cost(ocp, states, u_bl)

    h = 1e-6
    for idx in range(16):
        bump = np.zeros((8, 2))
        bump[idx // 2, idx % 2] = h
        fd = (cost_at(u_blocks + bump) - cost_at(u_blocks - bump)) / (2 * h)
        assert q[idx] == pytest.approx(fd, rel=1e-5, abs=1e-5)


def brute_force_cost(x0, refs, u_grid_a, u_grid_d, weights, p, s_dt, g_dt, dt):
    """Vectorized two-step rollout and cost over all control combinations,
    written directly from the model recursion (independent of the package
    rollout code)."""
    a0, d0, a1, d1 = np.meshgrid(
        u_grid_a, u_grid_d, u_grid_a, u_grid_d, indexing="ij"
    )
    a_x, v_x, v_y, d_y, r, theta = (np.full_like(a0, val) for val in x0[:6])
    cost = np.zeros_like(a0)
    for (ac, de), ref in zip(((a0, d0), (a1, d1)), refs):
        c_f, c_r = p.c_alpha_f, p.c_alpha_r
        v_y_dot = (
            -(c_f + c_r) / (p.mass * v_x) * v_y
            + ((p.l_r * c_r - p.l_f * c_f) / (p.mass * v_x) - v_x) * r
            + c_f / p.mass * de
        )
        r_dot = (
            (p.l_r * c_r - p.l_f * c_f) / (p.i_z * v_x) * v_y
            - (p.l_f**2 * c_f + p.l_r**2 * c_r) / (p.i_z * v_x) * r
            + p.l_f * c_f / p.i_z * de
        )
        a_x, v_x, v_y, d_y, r, theta = (
            s_dt * a_x + g_dt * ac,
            v_x + a_x * dt,
            v_y + v_y_dot * dt,
            d_y + (v_y * np.cos(theta) + v_x * np.sin(theta)) * dt,
            r + r_dot * dt,
            theta + r * dt,
        )
        cost += (
            weights.v_x * (ref.z_v_x - v_x) ** 2
            + weights.d_y * (ref.z_d_y - d_y) ** 2
            + weights.theta * (ref.z_theta - theta) ** 2
            + weights.a_x * ac**2
            + weights.delta * de**2
        )
    return cost


def test_two_step_horizon_matches_brute_force():
    # Loose bounds so the optimum is interior; coarse dt keeps it nontrivial.
    bounds = OcpBounds(
        delta_max=0.5,
        delta_rate_max=100.0,
        a_x_c_rate_min=-1000.0,
        a_x_c_rate_max=1000.0,
        v_x_max=60.0,
        a_y_max=50.0,
    )
    cfg = OcpConfig(
        n_pred=2, n_ctrl=2, dt=0.1, actuation_tau=0.25, bounds=bounds, kkt_tol=1e-8
    )
    refs = [ReferencePoint(19.0, 0.95, 0.0)] * 2
    x0 = VehicleState(v_x=20.0, d_y=1.0)
    ocp = build_ocp(x0, refs, cfg)
    sol = solve(ocp)
    assert sol.status == "converged"

    grid_a = np.linspace(-3.5, 1.5, 21)
    grid_d = np.linspace(-0.5, 0.5, 21)
    act = cfg.actuation
    cost = brute_force_cost(
        x0.as_array(), refs, grid_a, grid_d, cfg.weights, PARAMS, act.s_dt, act.g_dt, 0.1
    )
    best = np.unravel_index(np.argmin(cost), cost.shape)
    u_grid = np.array(
        [grid_a[best[0]], grid_d[best[1]], grid_a[best[2]], grid_d[best[3]]]
    )
    u_sol = sol.u_blocks.ravel()
    # The solver must do at least as well as the best grid point, and land
    # within one grid cell of it.
    assert sol.cost <= cost[best] + 1e-8
    spacing = np.array([0.25, 0.05, 0.25, 0.05])
    assert np.all(np.abs(u_sol - u_grid) <= spacing + 1e-12)


def test_velocity_step_saturates_command_and_rate():
    # One coarse step can reach the acceleration floor exactly at the rate
    # limit: -14 m/s^3 * 0.25 s = -3.5 m/s^2.
    cfg = OcpConfig(n_pred=4, n_ctrl=4, dt=0.25, actuation_tau=0.5)
    ocp = build_ocp(VehicleState(v_x=25.0), make_refs(4, 20.0), cfg)
    sol = solve(ocp)
    assert sol.status == "converged"
    first = sol.controls[0].a_x_c
    assert first == pytest.approx(-3.5, abs=1e-6)
    rate = (first - 0.0) / cfg.dt
    assert rate >= cfg.bounds.a_x_c_rate_min - 1e-9


def test_weight_scaling_keeps_the_optimum():
    cfg = OcpConfig(n_pred=10, n_ctrl=10)
    path = fit_quintic(0.0, 0.0, 0.0, -1.0, 0.0, 0.0, duration=3.0)
    refs = sample_reference(path, 0.2, 18.0, n=10, dt=0.01, v_for_heading=18.0)
    x0 = VehicleState(v_x=18.0)
    base = solve(build_ocp(x0, refs, cfg))
    w = cfg.weights
    scaled_cfg = OcpConfig(
        n_pred=10,
        n_ctrl=10,
        weights=OcpWeights(
            v_x=3.7 * w.v_x,
            d_y=3.7 * w.d_y,
            theta=3.7 * w.theta,
            a_x=3.7 * w.a_x,
            delta=3.7 * w.delta,
        ),
        kkt_tol=3.7e-6,
    )
    scaled = solve(build_ocp(x0, refs, scaled_cfg))
    np.testing.assert_allclose(scaled.u_blocks, base.u_blocks, atol=1e-5)
    assert scaled.cost == pytest.approx(3.7 * base.cost, rel=1e-4, abs=1e-8)


def test_reconfigured_prediction_equals_true_plant():
    fault = FaultVector(f1=0.5, f2=0.7)
    cfg = reconfigure(OcpConfig(), fault)
    path = fit_quintic(0.0, 0.0, 0.0, -3.5, 0.0, 0.0, duration=4.5)
    refs = sample_reference(path, 0.2, 15.0, n=30, dt=0.01, v_for_heading=20.0)
    ocp = build_ocp(VehicleState(v_x=20.0), refs, cfg)
    sol = solve(ocp)
    state = VehicleState(v_x=20.0)
    for k in range(cfg.n_pred):
        state = step_discrete(state, sol.controls[k], PARAMS, fault, cfg.actuation)
        gap = np.abs(state.as_array() - sol.predicted_states[k + 1].as_array())
        assert np.max(gap) <= 1e-10


def test_unmeetable_lateral_bound_reports_soft_infeasibility():
    # At this initial sideslip/yaw no admissible steering keeps |a_y| <= 2
    # at the first stage, so the shared slack must engage.
    cfg = OcpConfig()
    x0 = VehicleState(v_x=30.0, v_y=2.0, r=0.5)
    ocp = build_ocp(x0, make_refs(30, 25.0), cfg)
    sol = solve(ocp)
    assert sol.status == "infeasible_soft"
    assert sol.slack > 0.1


def test_iteration_cap_reports_max_iter():
    cfg = OcpConfig(max_iterations=1)
    path = fit_quintic(0.0, 0.0, 0.0, -3.5, 0.0, 0.0, duration=4.5)
    refs = sample_reference(path, 2.0, 1.26, n=30, dt=0.01, v_for_heading=25.0)
    ocp = build_ocp(VehicleState(v_x=25.0), refs, cfg)
    sol = solve(ocp)
    assert sol.status == "max_iter"
    assert sol.iterations == 1
    # The returned controls still respect the actuator box.
    for u in sol.controls:
        assert cfg.bounds.a_x_c_min - 1e-9 <= u.a_x_c <= cfg.bounds.a_x_c_max + 1e-9
        assert abs(u.delta) <= cfg.bounds.delta_max + 1e-9


def test_closed_loop_equilibrium_is_quiet():
    cfg = OcpConfig()
    controller = MpcController(cfg)
    state = VehicleState(v_x=25.0)
    refs = make_refs(30, 25.0)
    for _ in range(100):
        u, sol = controller.step(state, refs)
        assert sol.status == "converged"
        assert abs(u.a_x_c) <= 1e-6 and abs(u.delta) <= 1e-6
        state = step_discrete(state, u, PARAMS, FaultVector(), cfg.actuation)
    assert abs(state.d_y) <= 1e-9
    assert state.v_x == pytest.approx(25.0, abs=1e-6)


def test_closed_loop_braking_respects_bounds_and_rates():
    # Brake from just above the floor velocity: exercises the clamp-aware
    # linearization and the saturation logic together.
    cfg = OcpConfig()
    controller = MpcController(cfg)
    state = VehicleState(v_x=3.0)
    refs = make_refs(30, 1.26)
    prev = ControlInput()
    bd = cfg.bounds
    for _ in range(200):
        u, sol = controller.step(state, refs)
        assert bd.a_x_c_min - 1e-9 <= u.a_x_c <= bd.a_x_c_max + 1e-9
        assert abs(u.delta) <= bd.delta_max + 1e-9
        rate_a = (u.a_x_c - prev.a_x_c) / cfg.dt
        assert bd.a_x_c_rate_min - 1e-6 <= rate_a <= bd.a_x_c_rate_max + 1e-6
        assert abs(u.delta - prev.delta) / cfg.dt <= bd.delta_rate_max + 1e-6
        prev = u
        state = step_discrete(state, u, PARAMS, FaultVector(), cfg.actuation)
    assert state.v_x == pytest.approx(1.26, abs=0.05)


def test_warm_start_reduces_iterations():
    cfg = OcpConfig()
    path = fit_quintic(0.0, 0.0, 0.0, -3.5, 0.0, 0.0, duration=4.5)

    def simulate(warm):
        controller = MpcController(cfg, warm_start=warm)
        state = VehicleState(v_x=20.0)
        total = 0
        for k in range(40):
            refs = sample_reference(
                path, k * cfg.dt, 20.0, n=30, dt=cfg.dt, v_for_heading=state.v_x
            )
            u, sol = controller.step(state, refs)
            total += sol.iterations
            state = step_discrete(state, u, PARAMS, FaultVector(), cfg.actuation)
        return total, state

    warm_iters, warm_state = simulate(True)
    cold_iters, cold_state = simulate(False)
    assert warm_iters < cold_iters
    # Same closed-loop behaviour either way.
    np.testing.assert_allclose(
        warm_state.as_array(), cold_state.as_array(), atol=1e-6
    )


def test_move_blocking_single_block():
    cfg = OcpConfig(n_pred=10, n_ctrl=1)
    ocp = build_ocp(VehicleState(v_x=25.0), make_refs(10, 24.0), cfg)
    sol = solve(ocp)
    assert sol.status == "converged"
    assert sol.u_blocks.shape == (1, 2)
    # All expanded controls equal the single block.
    for u in sol.controls:
        assert u.a_x_c == sol.controls[0].a_x_c
