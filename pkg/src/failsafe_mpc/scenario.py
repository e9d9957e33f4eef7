"""Three-vehicle string simulation with fault injection and metrics.

A lead vehicle (LV) cruises at constant speed, a following vehicle (FV)
tracks it under ACC, and a trailing vehicle (TV) tracks the FV.  At the
injection time the FV's plant picks up the configured fault and the fault
classification event fires; the FV's safety channel (decision FSM plus
NMPC) takes over and parks the vehicle on the road shoulder, braking either
in-lane or out-of-lane.  When the FV has fully left the lane, the TV is told
to close the gap to the LV.

Plants integrate the single-track model with the TRUE fault; the NMPC uses
its assumed fault (healthy unless the controller was reconfigured with the
identified values).  The loop is single-threaded and free of randomness, so
identical configs produce bit-identical traces.

Metrics follow the trace definitions: stop time/distance from manoeuvre
start to the instant both parking goals hold to the end of the run, the
TV's gap-closing time between its time-gap error exceeding 0.4 s and
settling below 0.01 s, and per-signal error maxima against a no-fault
baseline run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acc import (
    AccConfig,
    FOLLOWER_GAINS,
    LEAD_GAINS,
    PdState,
    acc_longitudinal_command,
    lead_velocity_command,
    time_gap_error,
)
from .dynamics import (
    ControlInput,
    FaultVector,
    IDX_D_X,
    IDX_D_Y,
    IDX_R,
    IDX_V_X,
    N_STATES,
    VehicleState,
    V_X_MIN,
    step_discrete,
)
from .ocp import MpcController, OcpConfig, reconfigure
from .tdm import LaneGeometry, Mode, Strategy, TdmState, fsm_step
from .trajectory import fit_quintic, sample_reference

VEHICLE_NAMES = ("lead", "faulty", "trail")
_LEAD, _FAULTY, _TRAIL = 0, 1, 2

# Parking is reached when both goal errors are inside these thresholds.
V_STOP_TOL = 0.01  # [m/s]
D_Y_STOP_TOL = 0.001  # [m]

# Gap-closing metric thresholds on the TV's time-gap error.
GAP_OPEN_THRESHOLD = 0.4  # [s]
GAP_SETTLE_THRESHOLD = 0.01  # [s]
# "Stays below" is only trusted when the run extends this far past settling.
GAP_SETTLE_MARGIN = 5.0  # [s]


@dataclass(frozen=True)
class ScenarioConfig:
    """Experiment description: string geometry, fault, strategy, horizons."""

    v0: float = 25.0  # initial cruise speed of the whole string [m/s]
    h_dg: float = 1.2  # desired time gap [s]
    strategy: Strategy = Strategy.BRAKE_IN_LANE
    fault: FaultVector = field(default_factory=FaultVector)  # plant truth
    fault_known: bool = False  # reconfigure the controller with `fault`
    injection_time: float | None = 2.0  # None: never inject
    geometry: LaneGeometry = field(default_factory=LaneGeometry)
    t_lane_change: float = 4.5  # lateral path duration [s]
    duration: float = 30.0  # [s]
    dt: float = 0.01  # [s]
    ocp: OcpConfig = field(default_factory=OcpConfig)
    seed: int = 0  # plumbing only; the simulation is deterministic

    def __post_init__(self) -> None:
        if self.duration < 0.0:
            raise ValueError("duration must be >= 0")
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.ocp.dt != self.dt:
            raise ValueError("ScenarioConfig.dt must equal the controller dt")
        if self.h_dg <= 0.0:
            raise ValueError("h_dg must be > 0")
        if self.t_lane_change <= 0.0:
            raise ValueError("t_lane_change must be > 0")
        bd = self.ocp.bounds
        if not bd.v_x_min < self.v0 <= bd.v_x_max:
            raise ValueError(
                f"v0 = {self.v0:.4g} outside ({bd.v_x_min}, {bd.v_x_max}]"
            )
        if self.injection_time is not None and self.injection_time < 0.0:
            raise ValueError("injection_time must be >= 0 or None")

    @property
    def acc(self) -> AccConfig:
        return AccConfig(h_dg=self.h_dg)


@dataclass
class SimTrace:
    """Column-oriented record of one run, one sample per control step.

    Per-vehicle arrays are indexed [sample, vehicle, ...] with vehicle order
    VEHICLE_NAMES.  Reference and solver columns describe the faulty
    vehicle; they hold NaN (or empty strings) while its nominal channel is
    active.  e_tg_target is each follower's error to its current ACC target;
    e_tg_lv is its error to the lead vehicle regardless of target.
    """

    t: np.ndarray  # (n,)
    states: np.ndarray  # (n, 3, 7)
    controls: np.ndarray  # (n, 3, 2) applied (a_x_c, delta)
    e_tg_target: np.ndarray  # (n, 3)
    e_tg_lv: np.ndarray  # (n, 3)
    refs: np.ndarray  # (n, 3) tracked (z_v_x, z_d_y, z_theta)
    fsm_mode: list[str]  # (n,)
    solver_status: list[str]  # (n,) empty while not under NMPC
    solver_iterations: np.ndarray  # (n,) int
    kkt_residual: np.ndarray  # (n,)
    slack: np.ndarray  # (n,)
    config: ScenarioConfig
    t_a: float | None
    t_b: float | None
    aborted: bool = False
    abort_time: float | None = None

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    def vehicle_states(self, name: str) -> np.ndarray:
        return self.states[:, VEHICLE_NAMES.index(name), :]


def stop_condition(
    v_x: float, d_y: float, goal_velocity: float, goal_d_y: float
) -> bool:
    """True when both parking goals hold at one sample."""
    return (
        abs(v_x - goal_velocity) <= V_STOP_TOL
        and abs(d_y - goal_d_y) <= D_Y_STOP_TOL
    )


def run_scenario(config: ScenarioConfig) -> SimTrace:
    """Simulate the string; returns the trace (possibly truncated on abort).

    The loop records each sample before stepping the plants, so samples are
    states and the controls applied at them.  The run aborts only when a
    plant state turns non-finite; solver trouble is recorded per step and
    the run continues on the last command.
    """
    cfg = config
    dt = cfg.dt
    n_steps = int(round(cfg.duration / dt))
    n = n_steps + 1
    acc_cfg = cfg.acc
    act = cfg.ocp.actuation
    params = cfg.ocp.params
    healthy = FaultVector()
    gap = cfg.h_dg * cfg.v0

    states = [
        VehicleState(v_x=cfg.v0, d_x=0.0),
        VehicleState(v_x=cfg.v0, d_x=-gap),
        VehicleState(v_x=cfg.v0, d_x=-2.0 * gap),
    ]
    pd_states = [PdState(), PdState(), PdState()]
    tdm_state = TdmState()
    tv_target = _FAULTY
    nmpc: MpcController | None = None
    path = None
    last_fv_command = ControlInput()

    t_arr = np.arange(n) * dt
    states_arr = np.empty((n, 3, N_STATES))
    controls_arr = np.zeros((n, 3, 2))
    e_tg_target = np.full((n, 3), np.nan)
    e_tg_lv = np.full((n, 3), np.nan)
    refs_arr = np.full((n, 3), np.nan)
    fsm_mode: list[str] = []
    solver_status: list[str] = []
    iterations = np.zeros(n, dtype=int)
    kkt = np.full(n, np.nan)
    slack = np.full(n, np.nan)
    aborted = False
    abort_time: float | None = None
    rows = 0

    for k in range(n):
        t = float(t_arr[k])
        lead, faulty, trail = states

        stop_now = tdm_state.mode is Mode.BRAKING_TO_STOP and stop_condition(
            faulty.v_x, faulty.d_y, V_X_MIN, cfg.geometry.shoulder_center
        )
        fsc_event = cfg.injection_time is not None and t >= cfg.injection_time
        tdm_state, command = fsm_step(
            tdm_state,
            fsc_event,
            cfg.strategy is Strategy.BRAKE_OUT_OF_LANE,
            faulty,
            cfg.geometry,
            t,
            stop_reached=stop_now,
        )
        if command.notify_tv_close_gap:
            tv_target = _LEAD

        # Lead: plain cruise control on the reference speed.
        u_lead = ControlInput(
            a_x_c=lead_velocity_command(
                lead, cfg.v0, acc_cfg, LEAD_GAINS, pd_states[_LEAD], dt
            )
        )

        # Faulty vehicle: ACC on the lead until takeover, then NMPC.
        if not command.takeover:
            a_cmd = acc_longitudinal_command(
                faulty, lead, acc_cfg, FOLLOWER_GAINS, pd_states[_FAULTY], dt
            )
            u_faulty = ControlInput(a_x_c=a_cmd)
            e_tg_target[k, _FAULTY] = time_gap_error(
                lead.d_x, faulty.d_x, faulty.v_x, cfg.h_dg
            )
            solver_status.append("")
        else:
            if nmpc is None:
                ocp_cfg = (
                    reconfigure(cfg.ocp, cfg.fault) if cfg.fault_known else cfg.ocp
                )
                nmpc = MpcController(ocp_cfg, u_prev=last_fv_command)
                path = fit_quintic(
                    faulty.d_y,
                    0.0,
                    0.0,
                    cfg.geometry.shoulder_center,
                    0.0,
                    0.0,
                    cfg.t_lane_change,
                )
            refs = sample_reference(
                path,
                t - tdm_state.t_a,
                command.goal_velocity,
                cfg.ocp.n_pred,
                dt,
                v_for_heading=max(faulty.v_x, V_X_MIN),
            )
            try:
                u_faulty, sol = nmpc.step(faulty, refs)
                solver_status.append(sol.status)
                iterations[k] = sol.iterations
                kkt[k] = sol.kkt_residual
                slack[k] = sol.slack
            except RuntimeError:
                # Keep driving on the previous command; flag the step.
                u_faulty = last_fv_command
                nmpc.u_prev = u_faulty
                solver_status.append("error")
            refs_arr[k] = (refs[0].z_v_x, refs[0].z_d_y, refs[0].z_theta)

        # Trail: ACC on its current target.
        target = states[tv_target]
        a_cmd = acc_longitudinal_command(
            trail, target, acc_cfg, FOLLOWER_GAINS, pd_states[_TRAIL], dt
        )
        u_trail = ControlInput(a_x_c=a_cmd)
        e_tg_target[k, _TRAIL] = time_gap_error(
            target.d_x, trail.d_x, trail.v_x, cfg.h_dg
        )
        e_tg_lv[k, _FAULTY] = time_gap_error(
            lead.d_x, faulty.d_x, faulty.v_x, cfg.h_dg
        )
        e_tg_lv[k, _TRAIL] = time_gap_error(
            lead.d_x, trail.d_x, trail.v_x, cfg.h_dg
        )

        controls = [u_lead, u_faulty, u_trail]
        for i, (st, u) in enumerate(zip(states, controls)):
            states_arr[k, i] = st.as_array()
            controls_arr[k, i] = u.as_array()
        fsm_mode.append(tdm_state.mode.value)
        last_fv_command = u_faulty
        rows = k + 1

        if k == n_steps:
            break
        faults = [healthy, healthy, healthy]
        if cfg.injection_time is not None and t >= cfg.injection_time:
            faults[_FAULTY] = cfg.fault
        states = [
            step_discrete(st, u, params, fv, act)
            for st, u, fv in zip(states, controls, faults)
        ]
        if not all(np.isfinite(st.as_array()).all() for st in states):
            aborted = True
            abort_time = float(t_arr[k + 1])
            break

    return SimTrace(
        t=t_arr[:rows],
        states=states_arr[:rows],
        controls=controls_arr[:rows],
        e_tg_target=e_tg_target[:rows],
        e_tg_lv=e_tg_lv[:rows],
        refs=refs_arr[:rows],
        fsm_mode=fsm_mode,
        solver_status=solver_status,
        solver_iterations=iterations[:rows],
        kkt_residual=kkt[:rows],
        slack=slack[:rows],
        config=cfg,
        t_a=tdm_state.t_a,
        t_b=tdm_state.t_b,
        aborted=aborted,
        abort_time=abort_time,
    )


@dataclass
class MetricsReport:
    """Scalar outcomes of one run; None marks a metric whose trigger never
    fired (no manoeuvre, no settling inside the run, or no baseline)."""

    stop_time: float | None
    stop_distance: float | None
    tv_gap_closing_time: float | None
    e_tg_at_t_b: float | None
    max_d_y_error: float | None
    max_r_error: float | None
    max_delta: float


def _holds_to_end(ok: np.ndarray) -> np.ndarray:
    """ok[i] and all later entries."""
    return np.logical_and.accumulate(ok[::-1])[::-1]


def stop_metrics(trace: SimTrace) -> tuple[float | None, float | None]:
    """Time from manoeuvre start until both parking goals hold through the
    end of the run, and the distance travelled between those instants."""
    if trace.t_a is None:
        return None, None
    fv = trace.vehicle_states("faulty")
    goal_d_y = trace.config.geometry.shoulder_center
    ok = (np.abs(fv[:, IDX_V_X] - V_X_MIN) <= V_STOP_TOL) & (
        np.abs(fv[:, IDX_D_Y] - goal_d_y) <= D_Y_STOP_TOL
    )
    ok &= trace.t >= trace.t_a
    held = _holds_to_end(ok)
    if not held.any():
        return None, None
    i_stop = int(np.argmax(held))
    i_start = int(np.searchsorted(trace.t, trace.t_a))
    stop_time = float(trace.t[i_stop] - trace.t_a)
    stop_distance = float(fv[i_stop, IDX_D_X] - fv[i_start, IDX_D_X])
    return stop_time, stop_distance


def gap_closing_metrics(trace: SimTrace) -> tuple[float | None, float | None]:
    """Gap-closing time of the trailing vehicle and its lead-vehicle
    time-gap error at the lane-departure instant.

    The clock starts when the TV's time-gap error to its target first
    exceeds 0.4 s and stops when the error stays below 0.01 s through the
    end of the run, requiring at least 5 s of post-settle margin for the
    "stays" claim.
    """
    if trace.t_b is None:
        return None, None
    e_target = np.abs(trace.e_tg_target[:, _TRAIL])
    e_lv = np.abs(trace.e_tg_lv[:, _TRAIL])
    i_b = int(np.searchsorted(trace.t, trace.t_b))
    e_tg_at_t_b = float(e_lv[i_b])

    crossed = e_target > GAP_OPEN_THRESHOLD
    if not crossed.any():
        return None, e_tg_at_t_b
    i_open = int(np.argmax(crossed))
    settled = _holds_to_end(e_target < GAP_SETTLE_THRESHOLD)
    settled[: i_open + 1] = False
    if not settled.any():
        return None, e_tg_at_t_b
    i_close = int(np.argmax(settled))
    if trace.t[-1] - trace.t[i_close] < GAP_SETTLE_MARGIN:
        return None, e_tg_at_t_b
    return float(trace.t[i_close] - trace.t[i_open]), e_tg_at_t_b


@dataclass
class ErrorSeries:
    """Pointwise faulty-vehicle differences against a baseline run."""

    delta: np.ndarray
    d_y: np.ndarray
    r: np.ndarray

    @property
    def max_delta(self) -> float:
        return float(np.max(np.abs(self.delta)))

    @property
    def max_d_y(self) -> float:
        return float(np.max(np.abs(self.d_y)))

    @property
    def max_r(self) -> float:
        return float(np.max(np.abs(self.r)))


def error_metrics(trace: SimTrace, baseline: SimTrace) -> ErrorSeries:
    """Per-sample differences of the faulty vehicle's steering, lateral
    position, and yaw rate against a baseline run on the same time base."""
    if trace.n_samples != baseline.n_samples or not np.array_equal(
        trace.t, baseline.t
    ):
        raise ValueError("trace and baseline time bases differ")
    fv = trace.vehicle_states("faulty")
    fv_base = baseline.vehicle_states("faulty")
    return ErrorSeries(
        delta=trace.controls[:, _FAULTY, 1] - baseline.controls[:, _FAULTY, 1],
        d_y=fv[:, IDX_D_Y] - fv_base[:, IDX_D_Y],
        r=fv[:, IDX_R] - fv_base[:, IDX_R],
    )


def compute_metrics(
    trace: SimTrace, baseline: SimTrace | None = None
) -> MetricsReport:
    stop_time, stop_distance = stop_metrics(trace)
    closing_time, e_tg_at_t_b = gap_closing_metrics(trace)
    max_d_y_error = max_r_error = None
    if baseline is not None:
        errors = error_metrics(trace, baseline)
        max_d_y_error = errors.max_d_y
        max_r_error = errors.max_r
    return MetricsReport(
        stop_time=stop_time,
        stop_distance=stop_distance,
        tv_gap_closing_time=closing_time,
        e_tg_at_t_b=e_tg_at_t_b,
        max_d_y_error=max_d_y_error,
        max_r_error=max_r_error,
        max_delta=float(np.max(np.abs(trace.controls[:, _FAULTY, 1]))),
    )
