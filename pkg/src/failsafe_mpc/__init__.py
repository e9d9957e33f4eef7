"""Fail-safe fallback control for an automated vehicle string.

A three-vehicle string (lead, faulty, trail) follows constant-time-gap ACC.
When the middle vehicle loses steering or tire effectiveness, a tactical
layer picks a fallback strategy (brake in lane, or brake out of lane onto
the shoulder), an NMPC takes over and tracks a quintic lateral trajectory
with a decaying velocity reference, and the trail vehicle closes the gap to
the lead once the degraded vehicle leaves the lane.
"""

from .dynamics import (
    ActuationModel,
    ControlInput,
    FaultVector,
    VehicleParams,
    VehicleState,
    V_X_MIN,
)
from .ocp import MpcController, OcpBounds, OcpConfig, OcpWeights, reconfigure
from .scenario import (
    MetricsReport,
    ScenarioConfig,
    SimTrace,
    compute_metrics,
    run_scenario,
)
from .tdm import LaneGeometry, Mode, Strategy
from .trajectory import QuinticPath, ReferencePoint, fit_quintic, sample_reference

__all__ = [
    "ActuationModel",
    "ControlInput",
    "FaultVector",
    "LaneGeometry",
    "MetricsReport",
    "Mode",
    "MpcController",
    "OcpBounds",
    "OcpConfig",
    "OcpWeights",
    "QuinticPath",
    "ReferencePoint",
    "ScenarioConfig",
    "SimTrace",
    "Strategy",
    "VehicleParams",
    "VehicleState",
    "V_X_MIN",
    "compute_metrics",
    "fit_quintic",
    "reconfigure",
    "run_scenario",
    "sample_reference",
    "__version__",
]

__version__ = "0.1.0"
