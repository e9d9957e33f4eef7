"""NMPC for the degraded vehicle: reference tracking with fault-aware model.

Optimal control problem, solved at every sample with a Gauss-Newton SQP:

    min   sum_{k=1..N} ||x(k) - z(k)||_Q^2  +  sum_{k=0..N-1} ||u(k)||_R^2
           + sigma * s^2
    s.t.  x(k+1) = f(x(k), u(k))            (faulty single-track model)
          u in box, du/dt in box            (hard)
          a_x(k) in box                     (hard)
          v_x(k)  in [v_min - s, v_max + s] (soft)
          |a_y(k)| <= a_y_max + s           (soft)
          s >= 0

with tracked outputs (v_x, d_y, theta) and controls (a_x_c, delta).  The
horizon is condensed onto the control moves (with optional move blocking,
S <= N), so predicted states are always exact forward rollouts of the
current control sequence and the shooting gap is zero by construction.  One
shared slack variable softens the velocity and lateral-acceleration bounds;
all actuator bounds stay hard.

Reconfiguration after fault identification swaps the assumed fault factors
into the internal model and widens the steering bounds by 1/f1 so that the
commanded-times-realized steering range matches the healthy vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    ActuationModel,
    ControlInput,
    FaultVector,
    IDX_A_X,
    IDX_D_Y,
    IDX_THETA,
    IDX_V_X,
    IDX_V_Y,
    IDX_R,
    N_STATES,
    VehicleParams,
    VehicleState,
    V_X_MIN,
    dynamics_jacobians,
    hits_velocity_floor,
    lateral_acceleration,
    step_discrete,
)
from .qp import solve_qp
from .trajectory import ReferencePoint


@dataclass(frozen=True)
class OcpWeights:
    v_x: float = 10.0
    d_y: float = 100.0
    theta: float = 1.0
    a_x: float = 0.5  # on the commanded acceleration
    delta: float = 1.0

    def __post_init__(self) -> None:
        for name in ("v_x", "d_y", "theta", "a_x", "delta"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"OcpWeights.{name} must be >= 0")
        # Strictly positive control weights keep the condensed Hessian
        # positive definite.
        if self.a_x <= 0.0 or self.delta <= 0.0:
            raise ValueError("control weights must be > 0")


@dataclass(frozen=True)
class OcpBounds:
    """Actuator and state limits (all SI)."""

    delta_max: float = 0.0873  # |steering| [rad]
    delta_rate_max: float = 0.0818  # |steering rate| [rad/s]
    a_x_min: float = -3.5  # realized acceleration [m/s^2]
    a_x_max: float = 1.5
    a_x_c_min: float = -3.5  # commanded acceleration [m/s^2]
    a_x_c_max: float = 1.5
    a_x_c_rate_min: float = -14.0  # [m/s^3]
    a_x_c_rate_max: float = 6.0
    v_x_min: float = V_X_MIN  # [m/s]
    v_x_max: float = 33.0
    a_y_max: float = 2.0  # |lateral acceleration| [m/s^2]

    def __post_init__(self) -> None:
        if self.delta_max <= 0.0 or self.delta_rate_max <= 0.0:
            raise ValueError("steering bounds must be > 0")
        if self.a_x_min >= self.a_x_max or self.a_x_c_min >= self.a_x_c_max:
            raise ValueError("acceleration bounds are inverted")
        if self.a_x_c_rate_min >= 0.0 or self.a_x_c_rate_max <= 0.0:
            raise ValueError("acceleration rate bounds must straddle zero")
        if not 0.0 < self.v_x_min < self.v_x_max:
            raise ValueError("velocity bounds are inverted or nonpositive")
        if self.a_y_max <= 0.0:
            raise ValueError("a_y bound must be > 0")


@dataclass(frozen=True)
class OcpConfig:
    n_pred: int = 30  # prediction horizon N
    n_ctrl: int = 30  # control horizon S <= N (move blocking beyond S)
    dt: float = 0.01  # [s]
    actuation_tau: float = 0.1  # acceleration lag time constant [s]
    params: VehicleParams = field(default_factory=VehicleParams)
    weights: OcpWeights = field(default_factory=OcpWeights)
    bounds: OcpBounds = field(default_factory=OcpBounds)
    fault_assumed: FaultVector = field(default_factory=FaultVector)
    slack_weight: float = 1e4
    kkt_tol: float = 1e-6
    max_iterations: int = 50

    def __post_init__(self) -> None:
        if self.n_pred < 1:
            raise ValueError("OcpConfig.n_pred must be >= 1")
        if not 1 <= self.n_ctrl <= self.n_pred:
            raise ValueError("OcpConfig requires 1 <= n_ctrl <= n_pred")
        if self.dt <= 0.0:
            raise ValueError("OcpConfig.dt must be > 0")
        if self.slack_weight <= 0.0 or self.kkt_tol <= 0.0:
            raise ValueError("slack_weight and kkt_tol must be > 0")
        if self.max_iterations < 1:
            raise ValueError("OcpConfig.max_iterations must be >= 1")

    @property
    def actuation(self) -> ActuationModel:
        return ActuationModel.from_lag(dt=self.dt, tau=self.actuation_tau)


def reconfigure(config: OcpConfig, fault_known: FaultVector) -> OcpConfig:
    """Adapt the controller to an identified fault.

    The internal model picks up the fault factors, and the steering bounds
    widen by 1/f1 so the realized steering range is unchanged: commanding
    delta_max/f1 through a steering path with effectiveness f1 realizes
    exactly the healthy delta_max.  The steering-effort weight scales by
    f1^2 so the cost keeps pricing realized steering: with model, bounds,
    and weight transformed together, the reconfigured problem is exactly
    the healthy problem in the substituted variable f1*delta, and a fully
    identified steering fault leaves no residual on the tracked states.
    """
    bounds = replace(
        config.bounds,
        delta_max=config.bounds.delta_max / fault_known.f1,
        delta_rate_max=config.bounds.delta_rate_max / fault_known.f1,
    )
    weights = replace(
        config.weights, delta=config.weights.delta * fault_known.f1**2
    )
    return replace(config, fault_assumed=fault_known, bounds=bounds, weights=weights)


def stage_cost(
    x: VehicleState, u: ControlInput, ref: ReferencePoint, weights: OcpWeights
) -> float:
    """Tracking-error plus control-effort cost of one stage."""
    return (
        weights.v_x * (ref.z_v_x - x.v_x) ** 2
        + weights.d_y * (ref.z_d_y - x.d_y) ** 2
        + weights.theta * (ref.z_theta - x.theta) ** 2
        + weights.a_x * u.a_x_c**2
        + weights.delta * u.delta**2
    )


@dataclass(frozen=True)
class Ocp:
    """One tracking problem instance: initial state, references, previous
    applied input (anchor of the rate constraints at k = 0)."""

    x_init: VehicleState
    refs: tuple[ReferencePoint, ...]
    config: OcpConfig
    u_prev: ControlInput

    @property
    def n_control_vars(self) -> int:
        return 2 * self.config.n_ctrl


def build_ocp(
    x_init: VehicleState,
    refs: list[ReferencePoint] | tuple[ReferencePoint, ...],
    config: OcpConfig,
    u_prev: ControlInput = ControlInput(),
) -> Ocp:
    if len(refs) != config.n_pred:
        raise ValueError(f"need {config.n_pred} reference stages, got {len(refs)}")
    bd = config.bounds
    if not bd.v_x_min <= x_init.v_x <= bd.v_x_max:
        raise ValueError(
            f"x_init.v_x = {x_init.v_x:.4g} outside [{bd.v_x_min}, {bd.v_x_max}]"
        )
    tol = 1e-9
    if not (bd.a_x_c_min - tol <= u_prev.a_x_c <= bd.a_x_c_max + tol):
        raise ValueError("u_prev acceleration command outside actuator box")
    if abs(u_prev.delta) > bd.delta_max + tol:
        raise ValueError("u_prev steering outside actuator box")
    return Ocp(x_init=x_init, refs=tuple(refs), config=config, u_prev=u_prev)


@dataclass
class OcpSolution:
    controls: list[ControlInput]  # expanded to the prediction horizon
    predicted_states: list[VehicleState]  # rollout under `controls`, len N+1
    status: str  # "converged" | "max_iter" | "infeasible_soft"
    cost: float
    kkt_residual: float
    slack: float
    iterations: int
    u_blocks: np.ndarray  # (S, 2) decision blocks, warm-start carrier


# Slack counts as "in use" above this level; below is numerical noise.
_SLACK_ACTIVE_TOL = 1e-7

# State-constraint rows further than this from their bound are left out of
# the QP; they cannot become active within one SQP step, and the merit
# function evaluates the true (unscreened) violations anyway.
_SCREEN_V_X = 5.0  # [m/s]
_SCREEN_A_Y = 3.0  # [m/s^2]
_SCREEN_A_X = 2.0  # [m/s^2]


def _block_map(cfg: OcpConfig) -> np.ndarray:
    """Stage -> control block index (move blocking past the last block)."""
    return np.minimum(np.arange(cfg.n_pred), cfg.n_ctrl - 1)


def _rollout(ocp: Ocp, u_blocks: np.ndarray):
    """Exact forward simulation of the blocked control sequence.

    Returns (X, clamped): the stacked state trajectory (N+1, 7) and the
    per-step velocity-floor clamp flags (their linearization must freeze the
    v_x and a_x rows).
    """
    cfg = ocp.config
    act = cfg.actuation
    X = np.empty((cfg.n_pred + 1, N_STATES))
    clamped = np.zeros(cfg.n_pred, dtype=bool)
    state = ocp.x_init
    X[0] = state.as_array()
    for k in range(cfg.n_pred):
        j = min(k, cfg.n_ctrl - 1)
        u = ControlInput(a_x_c=u_blocks[j, 0], delta=u_blocks[j, 1])
        clamped[k] = hits_velocity_floor(state, act)
        state = step_discrete(state, u, cfg.params, cfg.fault_assumed, act)
        X[k + 1] = state.as_array()
    return X, clamped


def _refs_array(ocp: Ocp) -> np.ndarray:
    return np.array([[r.z_v_x, r.z_d_y, r.z_theta] for r in ocp.refs])


def _stage_controls(cfg: OcpConfig, u_blocks: np.ndarray) -> np.ndarray:
    """Controls expanded to all N stages, shape (N, 2)."""
    return u_blocks[_block_map(cfg)]


def _tracking_cost(ocp: Ocp, X: np.ndarray, u_blocks: np.ndarray) -> float:
    cfg = ocp.config
    w = cfg.weights
    z = _refs_array(ocp)
    ue = _stage_controls(cfg, u_blocks)
    return float(
        w.v_x * np.sum((X[1:, IDX_V_X] - z[:, 0]) ** 2)
        + w.d_y * np.sum((X[1:, IDX_D_Y] - z[:, 1]) ** 2)
        + w.theta * np.sum((X[1:, IDX_THETA] - z[:, 2]) ** 2)
        + w.a_x * np.sum(ue[:, 0] ** 2)
        + w.delta * np.sum(ue[:, 1] ** 2)
    )


def _lat_acc_stages(ocp: Ocp, X: np.ndarray, u_blocks: np.ndarray):
    """Vectorized a_y and its gradient pieces at stages 0..N-1.

    Matches dynamics.lateral_acceleration with the assumed fault; the
    vectorization is pinned to the scalar version by tests.
    """
    cfg = ocp.config
    p = cfg.params
    f = cfg.fault_assumed
    c_f = p.c_alpha_f
    c_r = p.c_alpha_r * f.f2
    m = p.mass
    v_x = X[:-1, IDX_V_X]
    v_y = X[:-1, IDX_V_Y]
    r = X[:-1, IDX_R]
    delta = _stage_controls(cfg, u_blocks)[:, 1]
    stiff = (c_f + c_r) / m
    moment = (p.l_r * c_r - p.l_f * c_f) / m
    a_y = -stiff / v_x * v_y + moment / v_x * r + c_f / m * f.f1 * delta
    d_vx = stiff / v_x**2 * v_y - moment / v_x**2 * r
    d_vy = -stiff / v_x
    d_r = moment / v_x
    d_delta = c_f / m * f.f1
    return a_y, d_vx, d_vy, d_r, d_delta


def _soft_violation(ocp: Ocp, X: np.ndarray, u_blocks: np.ndarray) -> float:
    """Largest violation of the softened (velocity, a_y) bounds on a rollout."""
    bd = ocp.config.bounds
    v = X[1:, IDX_V_X]
    worst = max(
        float(np.max(v - bd.v_x_max)),
        float(np.max(bd.v_x_min - v)),
    )
    a_y = _lat_acc_stages(ocp, X, u_blocks)[0]
    return max(worst, float(np.max(np.abs(a_y) - bd.a_y_max)))


def _hard_violation(ocp: Ocp, u_blocks: np.ndarray) -> float:
    """Largest violation of the actuator box/rate constraints by u_blocks."""
    bd = ocp.config.bounds
    dt = ocp.config.dt
    a_c = u_blocks[:, 0]
    de = u_blocks[:, 1]
    da = np.diff(a_c, prepend=ocp.u_prev.a_x_c)
    dd = np.diff(de, prepend=ocp.u_prev.delta)
    return float(
        max(
            np.max(a_c - bd.a_x_c_max),
            np.max(bd.a_x_c_min - a_c),
            np.max(np.abs(de) - bd.delta_max),
            np.max(da - bd.a_x_c_rate_max * dt),
            np.max(bd.a_x_c_rate_min * dt - da),
            np.max(np.abs(dd) - bd.delta_rate_max * dt),
        )
    )


def _sensitivities(ocp: Ocp, X: np.ndarray, clamped: np.ndarray, u_blocks: np.ndarray):
    """T[k] = d x(k) / d U for the clamped rollout, shape (N+1, 7, 2S)."""
    cfg = ocp.config
    act = cfg.actuation
    S = cfg.n_ctrl
    nu = 2 * S
    T = np.zeros((cfg.n_pred + 1, N_STATES, nu))
    for k in range(cfg.n_pred):
        j = min(k, S - 1)
        state = VehicleState.from_array(X[k])
        u = ControlInput(a_x_c=u_blocks[j, 0], delta=u_blocks[j, 1])
        A_k, B_k = dynamics_jacobians(state, u, cfg.params, cfg.fault_assumed, act)
        if clamped[k]:
            # Clamp freezes v_x at the floor and zeroes a_x.
            A_k[IDX_V_X, :] = 0.0
            A_k[IDX_A_X, :] = 0.0
            B_k[IDX_V_X, :] = 0.0
            B_k[IDX_A_X, :] = 0.0
        T[k + 1] = A_k @ T[k]
        T[k + 1, :, 2 * j : 2 * j + 2] += B_k
    return T


def linearized_qp_data(ocp: Ocp, u_blocks: np.ndarray):
    """Condensed QP of one SQP iteration at the given control sequence.

    Variables are v = [dU (2S flattened); s] where dU is the change of the
    control blocks and s the shared slack.  Returns (P, q, A, b, X) with the
    QP  min 1/2 v'Pv + q'v  s.t.  Av <= b.  Rate rows are scaled by dt so
    every row has O(1) entries.  State rows far from their bounds are
    screened out; rows whose gradient vanished under the velocity clamp are
    dropped when the slack row already implies them.
    """
    cfg = ocp.config
    N, S = cfg.n_pred, cfg.n_ctrl
    w, bd, dt = cfg.weights, cfg.bounds, cfg.dt
    nu = 2 * S
    nv = nu + 1

    X, clamped = _rollout(ocp, u_blocks)
    T = _sensitivities(ocp, X, clamped, u_blocks)
    z = _refs_array(ocp)

    # Gauss-Newton cost: stacked weighted tracking rows plus control effort.
    M = np.empty((3 * N, nu))
    res = np.empty(3 * N)
    sq_w = (math.sqrt(w.v_x), math.sqrt(w.d_y), math.sqrt(w.theta))
    for off, idx, col in ((0, IDX_V_X, 0), (1, IDX_D_Y, 1), (2, IDX_THETA, 2)):
        M[off::3] = sq_w[col] * T[1:, idx, :]
        res[off::3] = sq_w[col] * (X[1:, idx] - z[:, col])

    # Stage k uses block min(k, S-1); the final block absorbs the tail.
    counts = np.ones(S)
    counts[S - 1] = N - S + 1
    r_diag = np.repeat(counts, 2) * np.tile([w.a_x, w.delta], S)

    P = np.zeros((nv, nv))
    P[:nu, :nu] = 2.0 * (M.T @ M)
    P[np.arange(nu), np.arange(nu)] += 2.0 * r_diag
    P[nu, nu] = 2.0 * cfg.slack_weight
    q = np.zeros(nv)
    q[:nu] = 2.0 * (M.T @ res) + 2.0 * r_diag * u_blocks.ravel()

    flat = u_blocks.ravel()
    is_delta = np.tile([False, True], S)
    hi_box = np.where(is_delta, bd.delta_max, bd.a_x_c_max)
    lo_box = np.where(is_delta, -bd.delta_max, bd.a_x_c_min)

    # Hard actuator box: +/- identity rows.
    eye = np.zeros((nu, nv))
    eye[np.arange(nu), np.arange(nu)] = 1.0
    A_box = np.vstack([eye, -eye])
    b_box = np.concatenate([hi_box - flat, flat - lo_box])

    # Hard rate rows, scaled by dt; k = 0 anchors at u_prev.
    D = np.zeros((nu, nv))
    D[np.arange(nu), np.arange(nu)] = 1.0
    D[np.arange(2, nu), np.arange(nu - 2)] = -1.0
    u_prev_arr = np.array([ocp.u_prev.a_x_c, ocp.u_prev.delta])
    d_now = flat - np.concatenate([u_prev_arr, flat[:-2]])
    hi_rate = np.where(is_delta, bd.delta_rate_max, bd.a_x_c_rate_max) * dt
    lo_rate = np.where(is_delta, -bd.delta_rate_max, bd.a_x_c_rate_min) * dt
    A_rate = np.vstack([D, -D])
    b_rate = np.concatenate([hi_rate - d_now, d_now - lo_rate])

    blocks_A = [A_box, A_rate]
    blocks_b = [b_box, b_rate]

    def add_state_rows(grad, value, hi, lo, soft, screen):
        """Two-sided rows value +/- grad*dU (<= hi, >= lo) with screening."""
        n_rows = grad.shape[0]
        nonzero = np.max(np.abs(grad), axis=1) > 1e-14
        for sign, bvec in ((1.0, hi - value), (-1.0, value - lo)):
            keep = (bvec <= screen) & (nonzero | (bvec < -1e-12))
            if not np.any(keep):
                continue
            rows = np.zeros((int(np.sum(keep)), nv))
            rows[:, :nu] = sign * grad[keep]
            if soft:
                rows[:, nu] = -1.0
            blocks_A.append(rows)
            blocks_b.append(bvec[keep])

    # Hard realized-acceleration box along the prediction.
    add_state_rows(
        T[1:, IDX_A_X, :], X[1:, IDX_A_X], bd.a_x_max, bd.a_x_min, False, _SCREEN_A_X
    )
    # Soft velocity bounds (shared slack).
    add_state_rows(
        T[1:, IDX_V_X, :], X[1:, IDX_V_X], bd.v_x_max, bd.v_x_min, True, _SCREEN_V_X
    )
    # Soft lateral-acceleration bounds (shared slack).
    a_y, d_vx, d_vy, d_r, d_delta = _lat_acc_stages(ocp, X, u_blocks)
    G_ay = (
        d_vx[:, None] * T[:-1, IDX_V_X, :]
        + d_vy[:, None] * T[:-1, IDX_V_Y, :]
        + d_r[:, None] * T[:-1, IDX_R, :]
    )
    G_ay[np.arange(N), 2 * _block_map(cfg) + 1] += d_delta
    add_state_rows(G_ay, a_y, bd.a_y_max, -bd.a_y_max, True, _SCREEN_A_Y)

    # Slack nonnegativity.
    s_row = np.zeros((1, nv))
    s_row[0, nu] = -1.0
    blocks_A.append(s_row)
    blocks_b.append(np.array([0.0]))

    return P, q, np.vstack(blocks_A), np.concatenate(blocks_b), X


def solve(ocp: Ocp, warm_start: np.ndarray | None = None) -> OcpSolution:
    """Gauss-Newton SQP with line search on the exact penalty merit.

    The merit is the true reduced objective J(U) + sigma*viol(U)^2 (the
    slack is eliminated as the optimal s for fixed U) plus a large penalty
    on hard-constraint violation, which is nonzero only for infeasible
    starts; it is non-increasing across accepted iterations.
    """
    cfg = ocp.config
    S = cfg.n_ctrl
    nu = 2 * S
    sigma = cfg.slack_weight
    mu_hard = 1e6

    if warm_start is not None:
        u_blocks = np.array(warm_start, dtype=float).reshape(S, 2)
    else:
        u_blocks = np.zeros((S, 2))

    def merit(X, u_bl):
        viol = max(0.0, _soft_violation(ocp, X, u_bl))
        return (
            _tracking_cost(ocp, X, u_bl)
            + sigma * viol**2
            + mu_hard * max(0.0, _hard_violation(ocp, u_bl))
        )

    status = "max_iter"
    iters = 0
    kkt = np.inf
    for _ in range(cfg.max_iterations):
        iters += 1
        P, q, A, b, X = linearized_qp_data(ocp, u_blocks)
        s_cur = max(0.0, _soft_violation(ocp, X, u_blocks))
        qp = solve_qp(P, q, A, b)
        if qp.status != "optimal":
            # Cannot happen with a shared slack on every state row and
            # consistent actuator limits; fail loudly rather than mask it.
            raise RuntimeError("inner QP infeasible; actuator limits inconsistent")
        step = qp.x[:nu].reshape(S, 2)
        s_new = qp.x[nu]

        # Stationarity: at the QP optimum the multipliers satisfy
        # g + A'lam = -(P v) on the control block, so ||H dU|| bounds the
        # gradient residual left at the current iterate.  The slack entry of
        # P v is a multiplier sum, not a residual; slack settledness is
        # measured by its step instead.  Hard feasibility guards cold starts.
        hard_viol = max(0.0, _hard_violation(ocp, u_blocks))
        kkt = max(
            float(np.max(np.abs(P[:nu, :nu] @ qp.x[:nu]))),
            hard_viol,
            2.0 * sigma * abs(s_new - s_cur),
        )
        if kkt <= cfg.kkt_tol:
            status = "converged"
            break

        # Predicted decrease of the QP model from the zero step (slack held
        # at its current optimal value) to the QP optimum.
        v0 = np.zeros_like(qp.x)
        v0[nu] = s_cur
        model0 = 0.5 * v0 @ P @ v0 + q @ v0
        pred_dec = model0 - qp.obj

        phi0 = merit(X, u_blocks)
        if pred_dec <= 0.0 and hard_viol == 0.0:
            # No model progress available: stationary up to QP tolerance.
            status = "converged" if kkt <= 10 * cfg.kkt_tol else "max_iter"
            break

        alpha = 1.0
        accepted = False
        cushion = 1e-10 * max(1.0, abs(phi0))  # roundoff floor of the merit
        for _ in range(12):
            trial = u_blocks + alpha * step
            trial_X, _ = _rollout(ocp, trial)
            if merit(trial_X, trial) <= phi0 - 1e-4 * alpha * max(
                pred_dec, 0.0
            ) + cushion:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # Numerical floor of the merit reached; stop without stepping.
            status = "converged" if kkt <= 10 * cfg.kkt_tol else "max_iter"
            break
        u_blocks = u_blocks + alpha * step

    X, _ = _rollout(ocp, u_blocks)
    slack = max(0.0, _soft_violation(ocp, X, u_blocks))
    if status == "converged" and slack > _SLACK_ACTIVE_TOL:
        status = "infeasible_soft"
    controls = [
        ControlInput(
            a_x_c=float(u_blocks[min(k, S - 1), 0]),
            delta=float(u_blocks[min(k, S - 1), 1]),
        )
        for k in range(cfg.n_pred)
    ]
    return OcpSolution(
        controls=controls,
        predicted_states=[VehicleState.from_array(row) for row in X],
        status=status,
        cost=float(_tracking_cost(ocp, X, u_blocks) + sigma * slack**2),
        kkt_residual=float(kkt),
        slack=float(slack),
        iterations=iters,
        u_blocks=u_blocks,
    )


class MpcController:
    """Receding-horizon wrapper: warm starts, rate-constraint anchoring.

    Keeps the previously applied input (the rate constraint at k = 0 is
    relative to it) and shifts the last optimal control sequence by one
    sample as the next initial guess.
    """

    def __init__(
        self,
        config: OcpConfig,
        u_prev: ControlInput = ControlInput(),
        warm_start: bool = True,
    ):
        self.config = config
        self.u_prev = u_prev
        self.warm_start_enabled = warm_start
        self._u_blocks: np.ndarray | None = None

    def step(
        self, measured: VehicleState, refs: list[ReferencePoint]
    ) -> tuple[ControlInput, OcpSolution]:
        ocp = build_ocp(measured, refs, self.config, self.u_prev)
        guess = None
        if self.warm_start_enabled and self._u_blocks is not None:
            guess = np.vstack([self._u_blocks[1:], self._u_blocks[-1:]])
        solution = solve(ocp, warm_start=guess)
        applied = solution.controls[0]
        self.u_prev = applied
        self._u_blocks = solution.u_blocks
        return applied, solution
