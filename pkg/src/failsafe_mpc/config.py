"""Configuration files: YAML round-trip and validation diagnostics.

A configuration file is a single YAML document whose nested sections mirror
the dataclasses: top-level scenario fields plus ``fault``, ``geometry``, and
``ocp`` (itself containing ``params``, ``weights``, ``bounds``, and
``fault_assumed``).  Omitted keys fall back to the defaults, so a file may
contain only the overrides of interest.  ``validate_config`` collects every
rule violation with its field path instead of stopping at the first, which
is what the command-line ``validate`` subcommand reports.
"""

from __future__ import annotations

import math
from typing import Any

import yaml

from .dynamics import FaultVector, VehicleParams
from .ocp import OcpBounds, OcpConfig, OcpWeights
from .scenario import ScenarioConfig
from .tdm import LaneGeometry, Strategy


def default_config() -> ScenarioConfig:
    return ScenarioConfig()


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Plain nested-dict form of a scenario config (YAML/JSON friendly)."""
    ocp = cfg.ocp
    return {
        "v0": cfg.v0,
        "h_dg": cfg.h_dg,
        "strategy": cfg.strategy.value,
        "fault": {"f1": cfg.fault.f1, "f2": cfg.fault.f2},
        "fault_known": cfg.fault_known,
        "injection_time": cfg.injection_time,
        "t_lane_change": cfg.t_lane_change,
        "duration": cfg.duration,
        "dt": cfg.dt,
        "seed": cfg.seed,
        "geometry": {
            "lane_width": cfg.geometry.lane_width,
            "vehicle_width": cfg.geometry.vehicle_width,
            "shoulder_center": cfg.geometry.shoulder_center,
        },
        "ocp": {
            "n_pred": ocp.n_pred,
            "n_ctrl": ocp.n_ctrl,
            "dt": ocp.dt,
            "actuation_tau": ocp.actuation_tau,
            "slack_weight": ocp.slack_weight,
            "kkt_tol": ocp.kkt_tol,
            "max_iterations": ocp.max_iterations,
            "params": {
                "c_alpha_f": ocp.params.c_alpha_f,
                "c_alpha_r": ocp.params.c_alpha_r,
                "l_f": ocp.params.l_f,
                "l_r": ocp.params.l_r,
                "mass": ocp.params.mass,
                "i_z": ocp.params.i_z,
            },
            "weights": {
                "v_x": ocp.weights.v_x,
                "d_y": ocp.weights.d_y,
                "theta": ocp.weights.theta,
                "a_x": ocp.weights.a_x,
                "delta": ocp.weights.delta,
            },
            "bounds": {
                "delta_max": ocp.bounds.delta_max,
                "delta_rate_max": ocp.bounds.delta_rate_max,
                "a_x_min": ocp.bounds.a_x_min,
                "a_x_max": ocp.bounds.a_x_max,
                "a_x_c_min": ocp.bounds.a_x_c_min,
                "a_x_c_max": ocp.bounds.a_x_c_max,
                "a_x_c_rate_min": ocp.bounds.a_x_c_rate_min,
                "a_x_c_rate_max": ocp.bounds.a_x_c_rate_max,
                "v_x_min": ocp.bounds.v_x_min,
                "v_x_max": ocp.bounds.v_x_max,
                "a_y_max": ocp.bounds.a_y_max,
            },
            "fault_assumed": {
                "f1": ocp.fault_assumed.f1,
                "f2": ocp.fault_assumed.f2,
            },
        },
    }


def _check_keys(data: dict[str, Any], allowed: dict[str, Any], path: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = path or "top level"
        raise ValueError(f"unknown key(s) {unknown} at {where}")


def _section(data: dict[str, Any], key: str, path: str) -> dict[str, Any]:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ValueError(f"{path}{key} must be a mapping")
    return value


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    """Build a scenario config from a nested dict; missing keys default.

    Raises ValueError on unknown keys (naming the section) and propagates
    the dataclass validation errors for out-of-range values.
    """
    defaults = config_to_dict(ScenarioConfig())
    _check_keys(data, defaults, "")

    fault = _section(data, "fault", "")
    _check_keys(fault, defaults["fault"], "fault.")
    geometry = _section(data, "geometry", "")
    _check_keys(geometry, defaults["geometry"], "geometry.")
    ocp = _section(data, "ocp", "")
    _check_keys(ocp, defaults["ocp"], "ocp.")
    params = _section(ocp, "params", "ocp.")
    _check_keys(params, defaults["ocp"]["params"], "ocp.params.")
    weights = _section(ocp, "weights", "ocp.")
    _check_keys(weights, defaults["ocp"]["weights"], "ocp.weights.")
    bounds = _section(ocp, "bounds", "ocp.")
    _check_keys(bounds, defaults["ocp"]["bounds"], "ocp.bounds.")
    fault_assumed = _section(ocp, "fault_assumed", "ocp.")
    _check_keys(fault_assumed, defaults["ocp"]["fault_assumed"], "ocp.fault_assumed.")

    scenario_scalars = {
        k: data[k]
        for k in (
            "v0",
            "h_dg",
            "fault_known",
            "injection_time",
            "t_lane_change",
            "duration",
            "dt",
            "seed",
        )
        if k in data
    }
    ocp_scalars = {
        k: ocp[k]
        for k in (
            "n_pred",
            "n_ctrl",
            "dt",
            "actuation_tau",
            "slack_weight",
            "kkt_tol",
            "max_iterations",
        )
        if k in ocp
    }
    kwargs: dict[str, Any] = dict(scenario_scalars)
    if "strategy" in data:
        kwargs["strategy"] = Strategy(data["strategy"])
    if fault:
        kwargs["fault"] = FaultVector(**fault)
    if geometry:
        kwargs["geometry"] = LaneGeometry(**geometry)
    ocp_kwargs: dict[str, Any] = dict(ocp_scalars)
    if params:
        ocp_kwargs["params"] = VehicleParams(**params)
    if weights:
        ocp_kwargs["weights"] = OcpWeights(**weights)
    if bounds:
        ocp_kwargs["bounds"] = OcpBounds(**bounds)
    if fault_assumed:
        ocp_kwargs["fault_assumed"] = FaultVector(**fault_assumed)
    if ocp_kwargs or "ocp" in data:
        kwargs["ocp"] = OcpConfig(**ocp_kwargs)
    return ScenarioConfig(**kwargs)


def save_config(cfg: ScenarioConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


def load_config_dict(path: str) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return data


def load_config(path: str) -> ScenarioConfig:
    return config_from_dict(load_config_dict(path))


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _is_number(value: Any) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def validate_config(data: dict[str, Any]) -> list[str]:
    """Collect every rule violation as ``field.path: message`` diagnostics.

    Unlike ``config_from_dict`` (which stops at the first bad value), this
    checks the whole document so a single pass reports all problems.
    """
    diags: list[str] = []

    def unknown_keys(section: dict[str, Any], allowed: dict[str, Any], path: str):
        for key in sorted(set(section) - set(allowed)):
            where = f"{path}{key}" if path else key
            diags.append(f"{where}: unknown key")

    defaults = config_to_dict(ScenarioConfig())
    unknown_keys(data, defaults, "")
    for name in ("fault", "geometry", "ocp"):
        sec = data.get(name)
        if sec is not None and not isinstance(sec, dict):
            diags.append(f"{name}: must be a mapping")
            data = {k: v for k, v in data.items() if k != name}
    merged = _deep_merge(defaults, {k: v for k, v in data.items() if k in defaults})
    unknown_keys(merged["fault"], defaults["fault"], "fault.")
    unknown_keys(merged["geometry"], defaults["geometry"], "geometry.")
    unknown_keys(merged["ocp"], defaults["ocp"], "ocp.")
    for name in ("params", "weights", "bounds", "fault_assumed"):
        sec = merged["ocp"].get(name)
        if isinstance(sec, dict):
            unknown_keys(sec, defaults["ocp"][name], f"ocp.{name}.")
        else:
            diags.append(f"ocp.{name}: must be a mapping")
            merged["ocp"][name] = defaults["ocp"][name]

    def num(path: str, allow_none: bool = False):
        node: Any = merged
        for part in path.split("."):
            node = node[part] if isinstance(node, dict) and part in node else None
            if node is None:
                break
        if node is None and allow_none:
            return None
        if not _is_number(node):
            diags.append(f"{path}: must be a finite number")
            return None
        return float(node)

    def check(path: str, ok, message: str, allow_none: bool = False):
        """One diagnostic per field; cross-field rules only see values that
        passed their own check, so one bad field yields one line."""
        value = num(path, allow_none)
        if value is None:
            return None
        if not ok(value):
            diags.append(f"{path}: {message}")
            return None
        return value

    v0 = check("v0", lambda v: v > 0, "must be > 0")
    check("h_dg", lambda v: v > 0, "must be > 0")
    t_lc = check("t_lane_change", lambda v: v > 0, "must be > 0")
    duration = check("duration", lambda v: v >= 0, "must be >= 0")
    dt = check("dt", lambda v: v > 0, "must be > 0")
    injection = check("injection_time", lambda v: v >= 0, "must be >= 0 or null",
                      allow_none=True)
    if not isinstance(merged["fault_known"], bool):
        diags.append("fault_known: must be a boolean")
    if merged["strategy"] not in {s.value for s in Strategy}:
        diags.append(
            "strategy: must be one of "
            + ", ".join(sorted(s.value for s in Strategy))
        )

    check("fault.f1", lambda v: 0 < v <= 1, "must be in (0, 1]")
    check("fault.f2", lambda v: 0 < v <= 1, "must be in (0, 1]")
    check("ocp.fault_assumed.f1", lambda v: 0 < v <= 1, "must be in (0, 1]")
    check("ocp.fault_assumed.f2", lambda v: 0 < v <= 1, "must be in (0, 1]")

    lane = check("geometry.lane_width", lambda v: v > 0, "must be > 0")
    veh = check("geometry.vehicle_width", lambda v: v > 0, "must be > 0")
    num("geometry.shoulder_center")
    if lane is not None and veh is not None and lane <= veh:
        diags.append("geometry.lane_width: must exceed geometry.vehicle_width")

    n_pred = check("ocp.n_pred", lambda v: v >= 1 and v == int(v), "must be an integer >= 1")
    n_ctrl = check("ocp.n_ctrl", lambda v: v >= 1 and v == int(v), "must be an integer >= 1")
    if n_pred is not None and n_ctrl is not None and n_ctrl > n_pred:
        diags.append("ocp.n_ctrl: must be <= ocp.n_pred")
    ocp_dt = check("ocp.dt", lambda v: v > 0, "must be > 0")
    tau = check("ocp.actuation_tau", lambda v: v > 0, "must be > 0")
    if ocp_dt is not None and tau is not None and ocp_dt >= tau:
        diags.append("ocp.actuation_tau: must exceed ocp.dt")
    if dt is not None and ocp_dt is not None and dt != ocp_dt:
        diags.append("dt: must equal ocp.dt (one control step per plant step)")
    check("ocp.slack_weight", lambda v: v > 0, "must be > 0")
    check("ocp.kkt_tol", lambda v: v > 0, "must be > 0")
    check("ocp.max_iterations", lambda v: v >= 1 and v == int(v),
          "must be an integer >= 1")

    for name in ("c_alpha_f", "c_alpha_r", "l_f", "l_r", "mass", "i_z"):
        check(f"ocp.params.{name}", lambda v: v > 0, "must be > 0")
    for name in ("v_x", "d_y", "theta"):
        check(f"ocp.weights.{name}", lambda v: v >= 0, "must be >= 0")
    for name in ("a_x", "delta"):
        check(f"ocp.weights.{name}", lambda v: v > 0, "must be > 0")

    check("ocp.bounds.delta_max", lambda v: v > 0, "must be > 0")
    check("ocp.bounds.delta_rate_max", lambda v: v > 0, "must be > 0")
    check("ocp.bounds.a_y_max", lambda v: v > 0, "must be > 0")
    ax_lo = num("ocp.bounds.a_x_min")
    ax_hi = num("ocp.bounds.a_x_max")
    if ax_lo is not None and ax_hi is not None and ax_lo >= ax_hi:
        diags.append("ocp.bounds.a_x_min: must be below ocp.bounds.a_x_max")
    axc_lo = num("ocp.bounds.a_x_c_min")
    axc_hi = num("ocp.bounds.a_x_c_max")
    if axc_lo is not None and axc_hi is not None and axc_lo >= axc_hi:
        diags.append("ocp.bounds.a_x_c_min: must be below ocp.bounds.a_x_c_max")
    check("ocp.bounds.a_x_c_rate_min", lambda v: v < 0, "must be < 0")
    check("ocp.bounds.a_x_c_rate_max", lambda v: v > 0, "must be > 0")
    v_lo = check("ocp.bounds.v_x_min", lambda v: v > 0, "must be > 0")
    v_hi = num("ocp.bounds.v_x_max")
    if v_lo is not None and v_hi is not None and v_lo >= v_hi:
        diags.append("ocp.bounds.v_x_min: must be below ocp.bounds.v_x_max")
    if v0 is not None and v_lo is not None and v_hi is not None:
        if not v_lo < v0 <= v_hi:
            diags.append("v0: must lie in (ocp.bounds.v_x_min, ocp.bounds.v_x_max]")

    # Duration margin: the run must reach past the parking manoeuvre.
    if (
        injection is not None
        and duration is not None
        and t_lc is not None
        and duration < injection + t_lc
    ):
        diags.append(
            "duration: run ends before the lane change that starts at "
            "injection_time can finish"
        )
    return diags
