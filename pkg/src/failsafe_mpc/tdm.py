"""Tactical decision making for the fallback manoeuvre.

A small finite state machine that reacts to the fault-classification event,
picks the mitigation strategy from the environment (brake out-of-lane when
the road shoulder is long enough, otherwise brake in-lane), and sequences
the manoeuvre.  Both strategies steer the vehicle to the shoulder; they
differ in when braking starts:

    brake in-lane      -- goal velocity drops to the floor at takeover (t_a),
                          so the vehicle brakes while still in its lane;
    brake out-of-lane  -- speed is held through the lane change and braking
                          starts once the vehicle has fully left the lane
                          (t_b).

Leaving the lane also triggers the one-shot message telling the trailing
vehicle to close the gap to the lead vehicle.  The FSM is total: inputs that
do not apply in the current mode are ignored, and every call returns a
command.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .dynamics import V_X_MIN, VehicleState


class Mode(Enum):
    NOMINAL = "nominal"
    PARK_REQUESTED = "park_requested"
    LANE_CHANGE_ACTIVE = "lane_change_active"
    BRAKING_TO_STOP = "braking_to_stop"
    STOPPED = "stopped"


class Strategy(Enum):
    BRAKE_IN_LANE = "brake_in_lane"
    BRAKE_OUT_OF_LANE = "brake_out_of_lane"


@dataclass(frozen=True)
class LaneGeometry:
    """Lane and shoulder layout, with d_y = 0 at the active-lane center."""

    lane_width: float = 3.5
    vehicle_width: float = 1.8
    shoulder_center: float = -3.5  # lateral target of the manoeuvre

    def __post_init__(self) -> None:
        if not self.lane_width > self.vehicle_width > 0.0:
            raise ValueError("need lane_width > vehicle_width > 0")

    @property
    def departure_offset(self) -> float:
        """|d_y| at which the vehicle body is entirely outside its lane."""
        return 0.5 * (self.lane_width + self.vehicle_width)


def detect_lane_departure(d_y: float, lane_width: float, vehicle_width: float) -> bool:
    """True once the vehicle body is entirely outside the original lane.

    The center must be at least half a lane plus half a vehicle away from
    the lane center.
    """
    if not lane_width > vehicle_width > 0.0:
        raise ValueError("need lane_width > vehicle_width > 0")
    return abs(d_y) >= 0.5 * (lane_width + vehicle_width)


@dataclass(frozen=True)
class TdmState:
    """FSM state.  t_a is the manoeuvre start, t_b the lane-departure time;
    each is set exactly once.  hold_velocity freezes the takeover speed for
    the brake-out-of-lane strategy."""

    mode: Mode = Mode.NOMINAL
    strategy: Strategy | None = None
    t_a: float | None = None
    t_b: float | None = None
    tv_notified: bool = False
    hold_velocity: float | None = None


@dataclass(frozen=True)
class TdmCommand:
    """Output of one FSM step.

    takeover is latched: once the safety channel has control it keeps it.
    notify_tv_close_gap is a one-shot edge, true only on the step where the
    vehicle leaves the lane.
    """

    takeover: bool
    goal_velocity: float
    notify_tv_close_gap: bool = False


def _goal_velocity(state: TdmState, ego: VehicleState) -> float:
    if state.mode is Mode.NOMINAL:
        return ego.v_x
    if state.strategy is Strategy.BRAKE_IN_LANE:
        return V_X_MIN
    # Brake out-of-lane: hold the takeover speed until the lane is cleared.
    return V_X_MIN if state.t_b is not None else float(state.hold_velocity)


def fsm_step(
    state: TdmState,
    fsc_event: bool,
    shoulder_long_enough: bool,
    ego: VehicleState,
    lane_geometry: LaneGeometry,
    t: float,
    stop_reached: bool = False,
) -> tuple[TdmState, TdmCommand]:
    """Advance the FSM by one control step.

    fsc_event signals that the fault has been classified as severe;
    shoulder_long_enough is the environmental input selecting the strategy;
    stop_reached is the scenario stop detector's verdict for the current
    step.  Returns the successor state and the command for this step.
    """
    notify = False
    if state.mode is Mode.NOMINAL:
        if fsc_event:
            strategy = (
                Strategy.BRAKE_OUT_OF_LANE
                if shoulder_long_enough
                else Strategy.BRAKE_IN_LANE
            )
            state = replace(
                state,
                mode=Mode.PARK_REQUESTED,
                strategy=strategy,
                t_a=t,
                hold_velocity=ego.v_x,
            )
    elif state.mode is Mode.PARK_REQUESTED:
        # Lateral motion starts right after the takeover step.
        state = replace(state, mode=Mode.LANE_CHANGE_ACTIVE)
    elif state.mode is Mode.LANE_CHANGE_ACTIVE:
        if detect_lane_departure(
            ego.d_y, lane_geometry.lane_width, lane_geometry.vehicle_width
        ):
            state = replace(
                state, mode=Mode.BRAKING_TO_STOP, t_b=t, tv_notified=True
            )
            notify = True
    elif state.mode is Mode.BRAKING_TO_STOP:
        if stop_reached:
            state = replace(state, mode=Mode.STOPPED)
    # STOPPED is absorbing.

    command = TdmCommand(
        takeover=state.mode is not Mode.NOMINAL,
        goal_velocity=_goal_velocity(state, ego),
        notify_tv_close_gap=notify,
    )
    return state, command
