"""Digital twin and control stack for a dual-motor fingertip haptic device.

Subpackages by role:

* :mod:`edgesim.mech` — pure kinematics, force and power arithmetic.
* :mod:`edgesim.device` — firmware-style simulator with calibration,
  motion, stimulus presets and 6x6 pressure-frame synthesis.
* :mod:`edgesim.protocol` — newline-delimited JSON wire codec.
* :mod:`edgesim.server` / :mod:`edgesim.client` — the control endpoint
  and its host-side clients.
* :mod:`edgesim.analytics` — frame masking, band features, contact
  classification, frame/heatmap files.
* :mod:`edgesim.experiment` — randomized study sessions, responders,
  statistics and logs.
* :mod:`edgesim.bridge` — browser bridge for the live response UI.
* :mod:`edgesim.cli` — the ``edgesim`` command.
"""

__version__ = "0.1.0"

from edgesim.analytics import (
    ClassifierThresholds,
    ContactClass,
    band_ratio,
    calibrate_thresholds,
    classify,
    mask_outliers,
    read_frames,
    write_frames,
)
from edgesim.client import (
    DeviceRuntime,
    EdgeSimClient,
    LocalDeviceClient,
    TransportError,
    VirtualClock,
)
from edgesim.device import (
    ContactModel,
    Device,
    DeviceError,
    DeviceState,
    FSRFrame,
    SimParams,
    build_device,
    preset_targets,
    synth_condition_frames,
)
from edgesim.experiment import (
    ConfusionResponder,
    PerfectResponder,
    SessionPlan,
    SessionStats,
    TrialRecord,
    compute_stats,
    make_schedule,
    run_session,
)
from edgesim.mech import (
    ConfigError,
    EdgeDriveSpec,
    MechanismConfig,
    MotorSpec,
    PowerBudget,
    RangeError,
    SurfaceDriveSpec,
    default_config,
)
from edgesim.server import DeviceServer

__all__ = [
    "ClassifierThresholds",
    "ConfigError",
    "ConfusionResponder",
    "ContactClass",
    "ContactModel",
    "Device",
    "DeviceError",
    "DeviceRuntime",
    "DeviceServer",
    "DeviceState",
    "EdgeDriveSpec",
    "EdgeSimClient",
    "FSRFrame",
    "LocalDeviceClient",
    "MechanismConfig",
    "MotorSpec",
    "PerfectResponder",
    "PowerBudget",
    "RangeError",
    "SessionPlan",
    "SessionStats",
    "SimParams",
    "SurfaceDriveSpec",
    "TransportError",
    "TrialRecord",
    "VirtualClock",
    "band_ratio",
    "build_device",
    "calibrate_thresholds",
    "classify",
    "compute_stats",
    "default_config",
    "make_schedule",
    "mask_outliers",
    "preset_targets",
    "read_frames",
    "run_session",
    "synth_condition_frames",
    "write_frames",
    "__version__",
]
