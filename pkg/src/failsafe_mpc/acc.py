"""Constant-time-gap adaptive cruise control for the vehicle string.

Each follower regulates the time-gap error

    e_tg = h_dg - (d_x_preceding - d_x_ego) / v_x_ego        [s]

with a PD law u = k_p*e + k_d*de/dt, saturated to the acceleration command
bounds.  The lead vehicle runs the same PD structure on its velocity error
(v_ref - v_x) with its own gains.  The derivative is realized with a
first-order filter so a step in the error (e.g. when the trail vehicle
retargets from the faulty vehicle to the lead) produces a bounded command
instead of an impulse.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import VehicleState


@dataclass(frozen=True)
class PdGains:
    k_p: float
    k_d: float


# Velocity-tracking lead vehicle.
LEAD_GAINS = PdGains(k_p=5.0, k_d=0.3)
# Gap-tracking followers; negative because a positive e_tg (too close) must brake.
FOLLOWER_GAINS = PdGains(k_p=-150.0, k_d=-2.5)


@dataclass(frozen=True)
class AccConfig:
    """Time-gap policy and command saturation shared by the string."""

    h_dg: float = 1.2  # desired time gap [s]
    a_cmd_min: float = -3.5  # [m/s^2]
    a_cmd_max: float = 1.5  # [m/s^2]
    deriv_filter_tau: float = 0.05  # derivative filter time constant [s]

    def __post_init__(self) -> None:
        if self.h_dg <= 0.0:
            raise ValueError("AccConfig.h_dg must be > 0")
        if self.a_cmd_min >= self.a_cmd_max:
            raise ValueError("AccConfig acceleration bounds are inverted")
        if self.deriv_filter_tau <= 0.0:
            raise ValueError("AccConfig.deriv_filter_tau must be > 0")


@dataclass
class PdState:
    """Per-controller memory: previous error and filtered derivative."""

    prev_error: float = 0.0
    deriv: float = 0.0
    initialized: bool = False


def time_gap_error(
    d_x_preceding: float, d_x_ego: float, v_x_ego: float, h_dg: float
) -> float:
    """Signed time-gap error [s]; positive means closer than the policy gap."""
    if v_x_ego <= 0.0:
        raise ValueError(f"time gap undefined at v_x_ego = {v_x_ego:.4g} m/s")
    if d_x_preceding <= d_x_ego:
        raise ValueError("preceding vehicle must be ahead of the ego vehicle")
    return h_dg - (d_x_preceding - d_x_ego) / v_x_ego


def pd_step(
    e: float, state: PdState, gains: PdGains, dt: float, config: AccConfig
) -> float:
    """One PD update; mutates `state`, returns the saturated command."""
    if dt <= 0.0:
        raise ValueError("pd_step requires dt > 0")
    if not state.initialized:
        # No history yet: start with zero derivative rather than a spike.
        state.prev_error = e
        state.initialized = True
    tau = config.deriv_filter_tau
    state.deriv = (tau * state.deriv + (e - state.prev_error)) / (tau + dt)
    state.prev_error = e
    u = gains.k_p * e + gains.k_d * state.deriv
    return min(max(u, config.a_cmd_min), config.a_cmd_max)


def acc_longitudinal_command(
    ego: VehicleState,
    preceding: VehicleState,
    config: AccConfig,
    gains: PdGains,
    state: PdState,
    dt: float,
) -> float:
    """Follower acceleration command toward its current target vehicle."""
    e = time_gap_error(preceding.d_x, ego.d_x, ego.v_x, config.h_dg)
    return pd_step(e, state, gains, dt, config)


def lead_velocity_command(
    ego: VehicleState,
    v_ref: float,
    config: AccConfig,
    gains: PdGains,
    state: PdState,
    dt: float,
) -> float:
    """Lead vehicle acceleration command tracking a velocity reference."""
    return pd_step(v_ref - ego.v_x, state, gains, dt, config)
