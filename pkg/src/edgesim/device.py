"""Firmware-style simulator of the dual-motor fingertip device.

The simulated controller mirrors what the real firmware does: it only
knows axis positions as whole motor steps relative to a calibration zero,
it drives each axis toward its target at the commanded stepping rate, and
it refuses motion commands on an uncalibrated axis. Calibration replays
the physical procedure (drive into the hard stop, retract a fixed
distance, call that zero), so realized positions land on the step grid
rather than on the exact requested millimeters.

Pressure frames are synthesized from a small contact model: plate
penetration produces a broad bell of pressure centered on the fingerpad,
blade protrusion adds a narrow horizontal band at the aperture row, and
measurement artifacts (multiplicative noise, occasional spurious border
cells) are layered on deterministically per (seed, timestamp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from edgesim import protocol
from edgesim.mech import (
    ConfigError,
    MechanismConfig,
    config_from_dict,
    default_config,
    edge_net_force_n,
    edge_steps_to_cable_mm,
    round_half_away,
    split_namespaces,
)
from edgesim.protocol import (
    Calibrate,
    Frame,
    Hello,
    Message,
    Move,
    Preset,
    State,
    Status,
    Stream,
)

GRID = 6
_POS_EPS = 1e-9


class DeviceError(Exception):
    """Command rejected by the device; maps onto a wire error code."""

    def __init__(self, code: str, detail: str):
        assert code in protocol.ERROR_CODES
        super().__init__(detail)
        self.code = code
        self.detail = detail


def preset_targets(cfg: MechanismConfig) -> dict[str, tuple[float, float]]:
    """Stimulus presets as (surface_mm, edge_cable_mm) pairs.

    Built from the calibration displacement units a and b: light contact
    sits one unit past zero, heavy two; a retracted axis sits one unit
    below; NC retracts both.
    """
    a, b = cfg.a_mm, cfg.b_mm
    return {
        "EL": (a, b),
        "EH": (2 * a, 2 * b),
        "SL": (a, -b),
        "SH": (2 * a, -b),
        "NC": (-a, -b),
    }


@dataclass(frozen=True)
class ContactModel:
    """Tuning constants for pressure-frame synthesis.

    Stiffnesses are simulator tuning values chosen to keep synthesized
    forces inside the drive's force ceilings; they are not measured skin
    properties.
    """

    fingertip_stiffness_n_per_mm: float = 3.0
    edge_stiffness_n_per_mm: float = 1.0
    contact_onset_mm: float = 0.0
    aperture_row: int = 3
    surface_sigma_cells: float = 1.6
    edge_sigma_rows: float = 0.4
    noise_sigma: float = 0.05
    outlier_prob: float = 0.05
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.fingertip_stiffness_n_per_mm <= 0 or self.edge_stiffness_n_per_mm <= 0:
            raise ConfigError("stiffnesses must be positive")
        if not 0 <= self.aperture_row < GRID:
            raise ConfigError(f"aperture_row must be in [0, {GRID - 1}]")
        if not 0.0 <= self.outlier_prob <= 1.0:
            raise ConfigError("outlier_prob must be a probability")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.surface_sigma_cells <= 0 or self.edge_sigma_rows <= 0:
            raise ConfigError("spread sigmas must be positive")


class FSRFrame:
    """One timestamped 6x6 pressure sample (calibrated units, force-proportional)."""

    __slots__ = ("t_ms", "cells")

    def __init__(self, t_ms: int, cells: np.ndarray):
        cells = np.asarray(cells, dtype=float)
        if cells.shape != (GRID, GRID):
            raise ValueError(f"expected {GRID}x{GRID} cells, got {cells.shape}")
        if (cells < 0).any():
            raise ValueError("pressure cells must be non-negative")
        self.t_ms = int(t_ms)
        self.cells = cells

    def total(self) -> float:
        return float(self.cells.sum())

    def as_row_major(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.cells.ravel())

    def to_message(self) -> Frame:
        return Frame(t_ms=self.t_ms, cells=self.as_row_major())

    @classmethod
    def from_message(cls, msg: Frame) -> "FSRFrame":
        return cls(msg.t_ms, np.asarray(msg.cells, dtype=float).reshape(GRID, GRID))

    def __repr__(self) -> str:
        return f"FSRFrame(t_ms={self.t_ms}, total={self.total():.3f})"


@dataclass(frozen=True)
class SimParams:
    """Simulation-only knobs with no physical counterpart in the config."""

    surface_boot_slack_mm: float = 1.0   # boot position below the hard stop
    edge_boot_slack_mm: float = 2.0      # boot cable slack below max tension
    stream_rate_hz: float = 10.0

    def __post_init__(self) -> None:
        if self.surface_boot_slack_mm < 0 or self.edge_boot_slack_mm < 0:
            raise ConfigError("boot slack must be non-negative")
        if self.stream_rate_hz <= 0:
            raise ConfigError("stream_rate_hz must be positive")


@dataclass
class DeviceState:
    """Controller-visible snapshot of the device."""

    calibrated_surface: bool
    calibrated_edge: bool
    surface_pos_mm: float
    edge_cable_mm: float
    surface_target_mm: float
    edge_target_mm: float
    step_rate: float
    streaming: bool
    stream_rate_hz: float
    clock_ms: float
    moving: bool


class _Axis:
    """One actuation axis on the controller's step grid.

    Positions are floats in the current zero frame; motion advances at a
    constant speed and snaps exactly onto targets. Targets and the
    calibration retraction are whole motor steps, so settled positions
    are always integer multiples of ``mm_per_step``.
    """

    def __init__(self, name: str, mm_per_step: float, speed_mm_s: float,
                 retract_nominal_mm: float, margin_mm: float, boot_slack_mm: float):
        self.name = name
        self.mm_per_step = mm_per_step
        self.speed_mm_s = speed_mm_s
        self.retract_nominal_mm = retract_nominal_mm
        self.margin_mm = margin_mm
        self.calibrated = False
        self.pos_mm = 0.0
        self.stop_mm = boot_slack_mm          # hard-stop location in current frame
        self.retract_steps = round_half_away(retract_nominal_mm / mm_per_step)
        self.target_steps = 0
        self.nominal_target_mm = 0.0
        self.cal_phase: str | None = None     # None | "advance" | "retract"
        self._retract_to_mm = 0.0

    # -- command validation / commit (split so multi-axis commands are atomic)

    def check_command(self, mm: float) -> None:
        if not self.calibrated:
            raise DeviceError("NOT_CALIBRATED", f"{self.name} axis is not calibrated")
        if self.cal_phase is not None:
            raise DeviceError("BUSY", f"{self.name} axis is calibrating")
        hi = max(self.stop_mm, self.retract_nominal_mm)
        if not (-self.margin_mm - _POS_EPS <= mm <= hi + _POS_EPS):
            raise DeviceError(
                "OUT_OF_RANGE",
                f"{self.name} target {mm} mm outside [{-self.margin_mm}, {hi:.4f}] mm",
            )

    def commit_command(self, mm: float) -> None:
        lo = math.ceil((-self.margin_mm - _POS_EPS) / self.mm_per_step)
        hi = int(round(self.stop_mm / self.mm_per_step))
        steps = min(max(round_half_away(mm / self.mm_per_step), lo), hi)
        self.target_steps = steps
        self.nominal_target_mm = mm

    # -- calibration

    def begin_calibration(self) -> None:
        self.cal_phase = "advance"

    @property
    def target_mm(self) -> float:
        return self.target_steps * self.mm_per_step

    @property
    def moving(self) -> bool:
        if self.cal_phase is not None:
            return True
        return self.calibrated and abs(self.pos_mm - self.target_mm) > _POS_EPS

    def _motion_goal(self) -> float | None:
        if self.cal_phase == "advance":
            return self.stop_mm
        if self.cal_phase == "retract":
            return self._retract_to_mm
        if self.calibrated:
            return self.target_mm
        return None

    def _on_goal_reached(self) -> bool:
        """Returns True if motion continues into a new phase this tick."""
        if self.cal_phase == "advance":
            self._retract_to_mm = self.stop_mm - self.retract_steps * self.mm_per_step
            self.cal_phase = "retract"
            return True
        if self.cal_phase == "retract":
            # redefine the frame: here is zero, the stop sits one
            # retraction above it
            self.pos_mm = 0.0
            self.stop_mm = self.retract_steps * self.mm_per_step
            self.target_steps = 0
            self.nominal_target_mm = 0.0
            self.calibrated = True
            self.cal_phase = None
            return False
        return False

    def advance(self, dt_s: float) -> None:
        budget_mm = self.speed_mm_s * dt_s
        while budget_mm > 0:
            goal = self._motion_goal()
            if goal is None:
                return
            dist = goal - self.pos_mm
            if abs(dist) <= _POS_EPS:
                self.pos_mm = goal
                if not self._on_goal_reached():
                    return
                continue
            if abs(dist) <= budget_mm:
                self.pos_mm = goal
                budget_mm -= abs(dist)
                if not self._on_goal_reached():
                    # settled on the target; leftover budget is idle time
                    return
            else:
                self.pos_mm += math.copysign(budget_mm, dist)
                return


class Device:
    """The virtual device: one logical owner, commands and ticks serialized.

    The class itself is not thread-safe; wrap it in a lock (see
    :class:`edgesim.client.DeviceRuntime`) when commands and the tick
    loop run on different threads.
    """

    def __init__(self, cfg: MechanismConfig | None = None,
                 model: ContactModel | None = None,
                 params: SimParams | None = None):
        self.cfg = cfg if cfg is not None else default_config()
        self.model = model if model is not None else ContactModel()
        self.params = params if params is not None else SimParams()
        self.clock_ms = 0.0
        self.streaming = False
        self.stream_rate_hz = self.params.stream_rate_hz
        self._next_frame_ms = 0.0
        self._last_frame_t_ms = -1
        cable_per_step = edge_steps_to_cable_mm(1, self.cfg.edge)
        self.surface = _Axis(
            "surface",
            mm_per_step=self.cfg.surface.mm_per_step,
            speed_mm_s=self.cfg.surface_speed_mm_s,
            retract_nominal_mm=2 * self.cfg.a_mm,
            margin_mm=self.cfg.a_mm,
            boot_slack_mm=self.params.surface_boot_slack_mm,
        )
        self.edge = _Axis(
            "edge",
            mm_per_step=cable_per_step,
            speed_mm_s=self.cfg.edge_cable_speed_mm_s,
            retract_nominal_mm=2 * self.cfg.b_mm,
            margin_mm=self.cfg.b_mm,
            boot_slack_mm=self.params.edge_boot_slack_mm,
        )
        self._presets = preset_targets(self.cfg)

    # ------------------------------------------------------------------
    # command dispatch

    @property
    def moving(self) -> bool:
        return self.surface.moving or self.edge.moving

    def apply(self, msg: Message) -> Message:
        """Apply one command; returns the response message.

        Rejections raise :class:`DeviceError`; positions are never
        teleported, only targets and flags change here.
        """
        if isinstance(msg, Status):
            return self.state_message()
        if isinstance(msg, Calibrate):
            return self._apply_calibrate(msg)
        if isinstance(msg, Move):
            return self._apply_move(msg)
        if isinstance(msg, Preset):
            return self._apply_preset(msg)
        if isinstance(msg, Stream):
            return self._apply_stream(msg)
        if isinstance(msg, Hello):
            return Hello()
        raise DeviceError("BAD_COMMAND",
                          f"{type(msg).__name__.lower()} is not a device command")

    def _apply_calibrate(self, msg: Calibrate) -> Message:
        if self.moving:
            raise DeviceError("BUSY", "cannot calibrate while motion is in progress")
        axis = self.surface if msg.target == "surface" else self.edge
        axis.begin_calibration()
        return self.state_message()

    def _apply_move(self, msg: Move) -> Message:
        # validate every named axis before committing any of them
        pairs = []
        if msg.surface_mm is not None:
            pairs.append((self.surface, msg.surface_mm))
        if msg.edge_mm is not None:
            pairs.append((self.edge, msg.edge_mm))
        for axis, mm in pairs:
            axis.check_command(mm)
        for axis, mm in pairs:
            axis.commit_command(mm)
        return self.state_message()

    def _apply_preset(self, msg: Preset) -> Message:
        surface_mm, edge_mm = self._presets[msg.condition]
        self.surface.check_command(surface_mm)
        self.edge.check_command(edge_mm)
        self.surface.commit_command(surface_mm)
        self.edge.commit_command(edge_mm)
        return self.state_message()

    def _apply_stream(self, msg: Stream) -> Message:
        self.streaming = msg.enable
        if msg.enable:
            self.stream_rate_hz = msg.rate_hz
            self._next_frame_ms = self.clock_ms + 1000.0 / msg.rate_hz
        return self.state_message()

    # ------------------------------------------------------------------
    # time

    def tick(self, dt_ms: float) -> None:
        """Advance simulated time; both axes move toward their targets."""
        if dt_ms <= 0:
            raise ValueError("dt_ms must be positive")
        dt_s = dt_ms / 1000.0
        self.surface.advance(dt_s)
        self.edge.advance(dt_s)
        self.clock_ms += dt_ms

    def due_frames(self) -> list[FSRFrame]:
        """Frames whose scheduled emission time has been reached."""
        frames: list[FSRFrame] = []
        if not self.streaming:
            return frames
        interval = 1000.0 / self.stream_rate_hz
        while self._next_frame_ms <= self.clock_ms + _POS_EPS:
            # timestamps must strictly increase even at sub-ms intervals
            t = max(round(self._next_frame_ms), self._last_frame_t_ms + 1)
            frames.append(self.synth_frame(t_ms=t))
            self._last_frame_t_ms = t
            self._next_frame_ms += interval
        return frames

    def run_until_idle(self, dt_ms: float = 5.0, timeout_ms: float = 600_000.0) -> float:
        """Tick until no motion remains; returns elapsed simulated ms."""
        start = self.clock_ms
        while self.moving:
            if self.clock_ms - start > timeout_ms:
                raise TimeoutError("device did not settle within timeout")
            self.tick(dt_ms)
        return self.clock_ms - start

    # ------------------------------------------------------------------
    # observation

    def state(self) -> DeviceState:
        return DeviceState(
            calibrated_surface=self.surface.calibrated,
            calibrated_edge=self.edge.calibrated,
            surface_pos_mm=self.surface.pos_mm,
            edge_cable_mm=self.edge.pos_mm,
            surface_target_mm=self.surface.nominal_target_mm,
            edge_target_mm=self.edge.nominal_target_mm,
            step_rate=self.cfg.step_rate,
            streaming=self.streaming,
            stream_rate_hz=self.stream_rate_hz,
            clock_ms=self.clock_ms,
            moving=self.moving,
        )

    def state_message(self) -> State:
        return State(
            surface_mm=self.surface.pos_mm,
            edge_mm=self.edge.pos_mm,
            moving=self.moving,
            calibrated_surface=self.surface.calibrated,
            calibrated_edge=self.edge.calibrated,
        )

    # ------------------------------------------------------------------
    # pressure synthesis

    def contact_forces(self) -> tuple[float, float]:
        """(surface_force_n, edge_force_n) for the current positions.

        Plate force is elastic from penetration past the contact onset,
        clamped at the drive's rated maximum. Blade force requires both a
        positive protrusion (cable displacement divided by the lever
        gain) and plate contact, and is capped by the deliverable force
        at maximum cable tension.
        """
        model, cfg = self.model, self.cfg
        penetration = self.surface.pos_mm - model.contact_onset_mm
        surface_force = 0.0
        if penetration > 0:
            surface_force = min(model.fingertip_stiffness_n_per_mm * penetration,
                                cfg.surface.max_force_n)
        edge_force = 0.0
        protrusion = self.edge.pos_mm / cfg.edge.lever_gain
        if protrusion > 0 and surface_force > 0:
            ceiling = edge_net_force_n(cfg.edge.max_cable_tension_n, cfg.edge)
            edge_force = min(model.edge_stiffness_n_per_mm * protrusion, ceiling)
        return surface_force, edge_force

    def synth_frame(self, t_ms: int | None = None) -> FSRFrame:
        """Synthesize one sensor frame for the current state.

        Deterministic per (model.rng_seed, timestamp): repeated calls at
        the same simulated time yield bit-identical frames.
        """
        t = round(self.clock_ms) if t_ms is None else int(t_ms)
        model = self.model
        rng = np.random.default_rng((model.rng_seed, t))
        surface_force, edge_force = self.contact_forces()

        cells = np.zeros((GRID, GRID))
        if surface_force > 0:
            cells += surface_force * _blob_profile(model.surface_sigma_cells)
        if edge_force > 0:
            cells += edge_force * _band_profile(model.aperture_row, model.edge_sigma_rows)

        if cells.any():
            if model.noise_sigma > 0:
                cells *= 1.0 + model.noise_sigma * rng.standard_normal((GRID, GRID))
                np.maximum(cells, 0.0, out=cells)
            if model.outlier_prob > 0 and rng.random() < model.outlier_prob:
                r, c = _BORDER_CELLS[rng.integers(len(_BORDER_CELLS))]
                interior_median = float(np.median(cells[1:-1, 1:-1]))
                cells[r, c] = interior_median * rng.uniform(8.0, 16.0)
        return FSRFrame(t, cells)


_BORDER_CELLS = tuple(
    (r, c)
    for r in range(GRID)
    for c in range(GRID)
    if r in (0, GRID - 1) or c in (0, GRID - 1)
)


def _blob_profile(sigma_cells: float) -> np.ndarray:
    """Unit-sum isotropic bell centered on the grid midpoint."""
    coords = np.arange(GRID) - (GRID - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma_cells ** 2))
    blob = np.outer(g, g)
    return blob / blob.sum()


def _band_profile(aperture_row: int, sigma_rows: float) -> np.ndarray:
    """Unit-sum horizontal band: tight across rows, uniform along columns."""
    rows = np.arange(GRID, dtype=float)
    w = np.exp(-((rows - aperture_row) ** 2) / (2.0 * sigma_rows ** 2))
    band = np.repeat((w / w.sum())[:, None], GRID, axis=1) / GRID
    return band


def synth_condition_frames(
    condition: str,
    count: int,
    values: dict[str, object] | None = None,
    rng_seed: int | None = None,
    spacing_ms: float = 100.0,
    device: Device | None = None,
) -> list[FSRFrame]:
    """Settled frames for one stimulus condition, spaced like a live stream.

    Calibrates a fresh device (unless one is passed in), drives it to the
    preset, lets it settle, then samples ``count`` frames at the given
    spacing of simulated time.
    """
    dev = device if device is not None else build_device(values, rng_seed=rng_seed)
    for axis in ("surface", "edge"):
        if not getattr(dev, axis).calibrated:
            dev.apply(Calibrate(axis))
            dev.run_until_idle(dt_ms=20.0)
    dev.apply(Preset(condition))
    dev.run_until_idle(dt_ms=20.0)
    frames = []
    for _ in range(count):
        dev.tick(spacing_ms)
        frames.append(dev.synth_frame())
    return frames


# ---------------------------------------------------------------------------
# config-file integration (extends the mechanism config namespaces)

_CONTACT_KEYS = {
    "contact.fingertip_stiffness_n_per_mm": "fingertip_stiffness_n_per_mm",
    "contact.edge_stiffness_n_per_mm": "edge_stiffness_n_per_mm",
    "contact.contact_onset_mm": "contact_onset_mm",
    "contact.aperture_row": "aperture_row",
    "contact.surface_sigma_cells": "surface_sigma_cells",
    "contact.edge_sigma_rows": "edge_sigma_rows",
    "contact.noise_sigma": "noise_sigma",
    "contact.outlier_prob": "outlier_prob",
    "contact.rng_seed": "rng_seed",
}

_SIM_KEYS = {
    "sim.surface_boot_slack_mm": "surface_boot_slack_mm",
    "sim.edge_boot_slack_mm": "edge_boot_slack_mm",
    "sim.stream_rate_hz": "stream_rate_hz",
}


def build_device(values: dict[str, object] | None = None,
                 rng_seed: int | None = None) -> Device:
    """Construct a Device from flat config values (file overlay semantics).

    Unknown keys raise ConfigError so typos in config files surface
    instead of silently keeping defaults.
    """
    values = dict(values or {})
    mech_keys, rest = split_namespaces(values)
    cfg = config_from_dict(mech_keys)
    contact_kwargs = {}
    sim_kwargs = {}
    for key, value in rest.items():
        if key in _CONTACT_KEYS:
            contact_kwargs[_CONTACT_KEYS[key]] = value
        elif key in _SIM_KEYS:
            sim_kwargs[_SIM_KEYS[key]] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if rng_seed is not None:
        contact_kwargs["rng_seed"] = rng_seed
    return Device(cfg, ContactModel(**contact_kwargs), SimParams(**sim_kwargs))
