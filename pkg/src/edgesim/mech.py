"""Kinematics, force and power model for the dual-motor fingertip actuator.

Two actuation chains are modeled. The surface chain is a linear stepper
(lead-screw style: a fixed stroke per output revolution) that presses a
curved plate against the fingerpad. The edge chain is a geared stepper
that winds a cable on a spool; the cable works against a return spring
and drives a thin blade through an aperture in the plate, with a lever
amplifying cable tension into blade force.

Everything here is pure arithmetic over immutable spec objects, safe for
concurrent use. Stateful motion simulation lives in :mod:`edgesim.device`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class ConfigError(ValueError):
    """Invalid configuration value or unparseable config file."""


class RangeError(ValueError):
    """A commanded value falls outside the reachable range of an axis."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class MotorSpec:
    """One stepper motor.

    ``stroke_per_rev_mm`` is set for linear-output motors (the surface
    axis) and None for rotary-output motors (the edge axis, where linear
    travel comes from the spool downstream).
    """

    step_angle_deg: float
    steps_per_rev: int
    stroke_per_rev_mm: float | None
    max_step_rate: float
    power_w: float

    def __post_init__(self) -> None:
        _require(self.step_angle_deg > 0, "step_angle_deg must be positive")
        _require(self.steps_per_rev > 0, "steps_per_rev must be positive")
        _require(
            abs(self.step_angle_deg * self.steps_per_rev - 360.0) < 1e-9,
            f"step_angle_deg * steps_per_rev must equal 360, got "
            f"{self.step_angle_deg} * {self.steps_per_rev}",
        )
        if self.stroke_per_rev_mm is not None:
            _require(self.stroke_per_rev_mm > 0, "stroke_per_rev_mm must be positive")
        _require(self.max_step_rate > 0, "max_step_rate must be positive")
        _require(self.power_w > 0, "power_w must be positive")


@dataclass(frozen=True)
class SurfaceDriveSpec:
    """Linear drive pressing the contact plate against the fingerpad."""

    motor: MotorSpec
    max_force_n: float
    stroke_range_mm: float

    def __post_init__(self) -> None:
        _require(self.motor.stroke_per_rev_mm is not None,
                 "surface motor needs stroke_per_rev_mm")
        _require(self.max_force_n > 0, "max_force_n must be positive")
        _require(self.stroke_range_mm > 0, "stroke_range_mm must be positive")

    @property
    def mm_per_step(self) -> float:
        assert self.motor.stroke_per_rev_mm is not None
        return self.motor.stroke_per_rev_mm / self.motor.steps_per_rev


@dataclass(frozen=True)
class EdgeDriveSpec:
    """Geared cable drive pushing the blade through the plate aperture."""

    motor: MotorSpec
    gear_ratio: float
    lever_gain: float
    spool_radius_mm: float
    max_cable_tension_n: float
    spring_force_n: float

    def __post_init__(self) -> None:
        _require(self.gear_ratio > 1, "gear_ratio must exceed 1")
        _require(self.lever_gain > 1, "lever_gain must exceed 1")
        _require(self.spool_radius_mm > 0, "spool_radius_mm must be positive")
        _require(self.max_cable_tension_n > 0, "max_cable_tension_n must be positive")
        _require(self.spring_force_n >= 0, "spring_force_n must be non-negative")


@dataclass(frozen=True)
class PowerBudget:
    """Battery plus the named loads it feeds."""

    battery_voltage_v: float
    battery_capacity_mah: float
    loads: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        _require(self.battery_voltage_v > 0, "battery_voltage_v must be positive")
        _require(self.battery_capacity_mah > 0, "battery_capacity_mah must be positive")
        for label, watts in self.loads:
            _require(watts > 0, f"load {label!r} must draw positive power")

    @property
    def energy_wh(self) -> float:
        return self.battery_voltage_v * self.battery_capacity_mah / 1000.0


@dataclass(frozen=True)
class MechanismConfig:
    """Every physical constant of the device in one place.

    ``step_rate`` is the commanded stepping rate used for motion timing
    on both motors. ``a_mm`` / ``b_mm`` are the displacement units the
    calibration procedure and the stimulus presets are built from.
    """

    surface: SurfaceDriveSpec
    edge: EdgeDriveSpec
    power: PowerBudget
    step_rate: float = 200.0
    a_mm: float = 0.35
    b_mm: float = 1.5

    def __post_init__(self) -> None:
        _require(self.step_rate > 0, "step_rate must be positive")
        _require(self.a_mm > 0, "a_mm must be positive")
        _require(self.b_mm > 0, "b_mm must be positive")

    @property
    def edge_cable_mm_per_step(self) -> float:
        return edge_steps_to_cable_mm(1, self.edge)

    @property
    def surface_speed_mm_s(self) -> float:
        """Plate speed at the commanded step rate."""
        return self.surface.mm_per_step * self.step_rate

    @property
    def edge_cable_speed_mm_s(self) -> float:
        """Cable speed at the commanded step rate.

        The gearbox divides the effective output stepping rate, so cable
        speed is per-step travel times ``step_rate / gear_ratio``.
        """
        return self.edge_cable_mm_per_step * self.step_rate / self.edge.gear_ratio


def default_config() -> MechanismConfig:
    """Shipped constants for the physical device."""
    surface_motor = MotorSpec(
        step_angle_deg=18.0,
        steps_per_rev=20,
        stroke_per_rev_mm=0.3,
        max_step_rate=200.0,
        power_w=0.76,
    )
    # The edge motor's datasheet step angle is ambiguous; 18 deg with the
    # 26.45:1 gearbox reproduces the 0.68 deg effective step this model
    # is checked against. An 8 deg motor (45 steps/rev) can be configured.
    edge_motor = MotorSpec(
        step_angle_deg=18.0,
        steps_per_rev=20,
        stroke_per_rev_mm=None,
        max_step_rate=200.0,
        power_w=0.52,
    )
    surface = SurfaceDriveSpec(motor=surface_motor, max_force_n=3.18, stroke_range_mm=6.5)
    edge = EdgeDriveSpec(
        motor=edge_motor,
        gear_ratio=26.45,
        lever_gain=2.63,
        spool_radius_mm=5.0,
        max_cable_tension_n=2.21,
        spring_force_n=0.3,
    )
    power = PowerBudget(
        battery_voltage_v=3.7,
        battery_capacity_mah=2000.0,
        loads=(("surface", 0.76), ("edge", 0.52)),
    )
    return MechanismConfig(surface=surface, edge=edge, power=power)


# ---------------------------------------------------------------------------
# step / displacement conversions

def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero.

    Symmetric for advance and retract targets, unlike banker's rounding.
    """
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def surface_steps_to_mm(steps: int, spec: SurfaceDriveSpec) -> float:
    """Linear plate travel for a signed number of motor steps."""
    assert spec.motor.stroke_per_rev_mm is not None
    return steps * spec.motor.stroke_per_rev_mm / spec.motor.steps_per_rev


def surface_mm_to_steps(target_mm: float, spec: SurfaceDriveSpec) -> int:
    """Nearest whole-step count realizing ``target_mm`` of plate travel."""
    if abs(target_mm) > spec.stroke_range_mm:
        raise RangeError(
            f"surface target {target_mm} mm exceeds stroke range "
            f"+/-{spec.stroke_range_mm} mm"
        )
    return round_half_away(target_mm / spec.mm_per_step)


def edge_effective_step_deg(spec: EdgeDriveSpec) -> float:
    """Output-shaft rotation per motor step, after the gearbox."""
    return spec.motor.step_angle_deg / spec.gear_ratio


def edge_steps_to_cable_mm(steps: int, spec: EdgeDriveSpec) -> float:
    """Cable take-up for a signed number of motor steps."""
    return steps * math.radians(edge_effective_step_deg(spec)) * spec.spool_radius_mm


def edge_cable_mm_to_steps(target_mm: float, spec: EdgeDriveSpec) -> int:
    """Nearest whole-step count realizing ``target_mm`` of cable travel."""
    return round_half_away(target_mm / edge_steps_to_cable_mm(1, spec))


# ---------------------------------------------------------------------------
# forces, timing, endurance

def edge_net_force_n(cable_tension_n: float, spec: EdgeDriveSpec) -> float:
    """Blade force delivered for a given cable tension.

    The lever multiplies tension; the return spring opposes it. Output is
    clamped at zero (the spring cannot pull the blade into the finger).
    """
    if not 0.0 <= cable_tension_n <= spec.max_cable_tension_n:
        raise RangeError(
            f"cable tension {cable_tension_n} N outside "
            f"[0, {spec.max_cable_tension_n}] N"
        )
    return max(0.0, spec.lever_gain * cable_tension_n - spec.spring_force_n)


def motion_duration_s(steps: int, rate: float) -> float:
    """Seconds to execute ``steps`` at a constant stepping rate."""
    if rate <= 0:
        raise ValueError("step rate must be positive")
    return steps / rate


def endurance_h(budget: PowerBudget, active: tuple[str, ...] | None = None) -> float:
    """Battery life in hours with the given subset of loads active.

    ``active`` names loads from the budget; None means all of them.
    """
    labels = {label for label, _ in budget.loads}
    if active is None:
        active = tuple(labels)
    if not active:
        raise ValueError("at least one load must be active")
    unknown = set(active) - labels
    if unknown:
        raise ValueError(f"unknown loads: {sorted(unknown)}")
    draw_w = sum(watts for label, watts in budget.loads if label in set(active))
    return budget.energy_wh / draw_w


# ---------------------------------------------------------------------------
# config file: flat "dotted.key = value" text, one assignment per line

_CONFIG_FIELDS: dict[str, tuple[str, ...]] = {
    "surface.step_angle_deg": ("surface", "motor", "step_angle_deg"),
    "surface.steps_per_rev": ("surface", "motor", "steps_per_rev"),
    "surface.stroke_per_rev_mm": ("surface", "motor", "stroke_per_rev_mm"),
    "surface.max_step_rate": ("surface", "motor", "max_step_rate"),
    "surface.power_w": ("surface", "motor", "power_w"),
    "surface.max_force_n": ("surface", "max_force_n"),
    "surface.stroke_range_mm": ("surface", "stroke_range_mm"),
    "edge.step_angle_deg": ("edge", "motor", "step_angle_deg"),
    "edge.steps_per_rev": ("edge", "motor", "steps_per_rev"),
    "edge.max_step_rate": ("edge", "motor", "max_step_rate"),
    "edge.power_w": ("edge", "motor", "power_w"),
    "edge.gear_ratio": ("edge", "gear_ratio"),
    "edge.lever_gain": ("edge", "lever_gain"),
    "edge.spool_radius_mm": ("edge", "spool_radius_mm"),
    "edge.max_cable_tension_n": ("edge", "max_cable_tension_n"),
    "edge.spring_force_n": ("edge", "spring_force_n"),
    "battery.voltage_v": ("power", "battery_voltage_v"),
    "battery.capacity_mah": ("power", "battery_capacity_mah"),
    "motion.step_rate": ("step_rate",),
    "calibration.a_mm": ("a_mm",),
    "calibration.b_mm": ("b_mm",),
}


def parse_kv_text(text: str) -> dict[str, object]:
    """Parse ``key = value`` lines into a flat dict.

    Blank lines and ``#`` comments are skipped. Values become int, float,
    bool or str by inspection.
    """
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        out[key] = _parse_value(value)
    return out


def _parse_value(text: str) -> object:
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text.strip("\"'")


def config_from_dict(values: dict[str, object],
                     base: MechanismConfig | None = None) -> MechanismConfig:
    """Overlay flat config keys onto ``base`` (shipped defaults if None).

    Keys outside the mechanism namespace are rejected; callers holding a
    wider config file should pre-filter with :func:`split_namespaces`.
    """
    cfg = base if base is not None else default_config()
    for key, value in values.items():
        path = _CONFIG_FIELDS.get(key)
        if path is None:
            raise ConfigError(f"unknown config key {key!r}")
        cfg = _set_path(cfg, path, value)
    return cfg


def _set_path(cfg: MechanismConfig, path: tuple[str, ...], value: object):
    if len(path) == 1:
        return replace(cfg, **{path[0]: value})
    obj = getattr(cfg, path[0])
    if len(path) == 2:
        inner = replace(obj, **{path[1]: value})
    else:
        motor = replace(getattr(obj, path[1]), **{path[2]: value})
        inner = replace(obj, **{path[1]: motor})
    return replace(cfg, **{path[0]: inner})


MECH_NAMESPACES = ("surface.", "edge.", "battery.", "motion.", "calibration.")


def split_namespaces(values: dict[str, object]) -> tuple[dict[str, object], dict[str, object]]:
    """Split a flat config dict into (mechanism keys, remaining keys)."""
    mech: dict[str, object] = {}
    rest: dict[str, object] = {}
    for key, value in values.items():
        (mech if key.startswith(MECH_NAMESPACES) else rest)[key] = value
    return mech, rest


def load_config(path: str, base: MechanismConfig | None = None) -> MechanismConfig:
    """Read a mechanism config file, overlaying onto shipped defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        values = parse_kv_text(fh.read())
    mech_keys, _ = split_namespaces(values)
    return config_from_dict(mech_keys, base=base)


def config_to_text(cfg: MechanismConfig) -> str:
    """Render a config as the flat text format, every constant included."""
    lines = []
    for key, path in _CONFIG_FIELDS.items():
        obj: object = cfg
        for attr in path:
            obj = getattr(obj, attr)
        if obj is None:
            continue
        lines.append(f"{key} = {obj}")
    return "\n".join(lines) + "\n"
