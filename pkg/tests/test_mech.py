from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from edgesim import mech
from edgesim.mech import (
    ConfigError,
    MotorSpec,
    RangeError,
    config_from_dict,
    default_config,
    edge_cable_mm_to_steps,
    edge_effective_step_deg,
    edge_net_force_n,
    edge_steps_to_cable_mm,
    endurance_h,
    motion_duration_s,
    parse_kv_text,
    surface_mm_to_steps,
    surface_steps_to_mm,
)

CFG = default_config()


def quantize_oracle(target: Fraction, step: Fraction) -> int:
    """Independent nearest-step oracle in exact rational arithmetic."""
    q = target / step
    whole = q.numerator // q.denominator
    frac = q - whole
    if q >= 0:
        return int(whole + (1 if frac >= Fraction(1, 2) else 0))
    return int(whole + (1 if frac > Fraction(1, 2) else 0))


# ---------------------------------------------------------------------------
# surface chain

def test_surface_single_step_resolution():
    assert surface_steps_to_mm(1, CFG.surface) == pytest.approx(0.015, abs=1e-12)


def test_surface_zero_steps():
    assert surface_steps_to_mm(0, CFG.surface) == 0.0


def test_surface_full_revolution_stroke():
    assert surface_steps_to_mm(20, CFG.surface) == pytest.approx(0.300, abs=1e-12)


@pytest.mark.parametrize(
    "target_mm,expected_steps",
    [
        (0.35, quantize_oracle(Fraction(35, 100), Fraction(15, 1000))),
        (0.0, 0),
        (0.70, quantize_oracle(Fraction(70, 100), Fraction(15, 1000))),
    ],
)
def test_surface_mm_to_steps_matches_rational_oracle(target_mm, expected_steps):
    assert surface_mm_to_steps(target_mm, CFG.surface) == expected_steps


def test_surface_quantization_fixture_values():
    # 0.35/0.015 = 23.33 -> 23 (0.345 realized); 0.70/0.015 = 46.67 -> 47
    assert surface_mm_to_steps(0.35, CFG.surface) == 23
    assert surface_steps_to_mm(23, CFG.surface) == pytest.approx(0.345)
    assert surface_mm_to_steps(0.70, CFG.surface) == 47
    assert surface_steps_to_mm(47, CFG.surface) == pytest.approx(0.705)


def test_surface_target_out_of_stroke_raises():
    with pytest.raises(RangeError, match="surface"):
        surface_mm_to_steps(6.6, CFG.surface)


@given(st.integers(min_value=-433, max_value=433))
def test_surface_step_roundtrip(steps):
    mm = surface_steps_to_mm(steps, CFG.surface)
    assert surface_mm_to_steps(mm, CFG.surface) == steps


@given(st.floats(min_value=-6.5, max_value=6.5, allow_nan=False))
def test_surface_quantization_bound(target):
    steps = surface_mm_to_steps(target, CFG.surface)
    realized = surface_steps_to_mm(steps, CFG.surface)
    assert abs(realized - target) <= 0.0075 + 1e-12


# ---------------------------------------------------------------------------
# edge chain

def test_edge_effective_step_angle():
    assert edge_effective_step_deg(CFG.edge) == pytest.approx(0.6805, abs=5e-4)


def test_edge_effective_step_identity_gearbox_value():
    # ratio 1 is rejected by the spec invariant (gear_ratio > 1), so the
    # identity case is checked as raw division on a near-unity ratio.
    near_unity = mech.EdgeDriveSpec(
        motor=CFG.edge.motor, gear_ratio=1.0 + 1e-12, lever_gain=2.63,
        spool_radius_mm=5.0, max_cable_tension_n=2.21, spring_force_n=0.0)
    assert edge_effective_step_deg(near_unity) == pytest.approx(18.0)


def test_edge_effective_step_alternate_motor_reading():
    # an 8 deg motor (45 steps/rev keeps 360 deg/rev) stays constructible
    motor = MotorSpec(8.0, 45, None, 200.0, 0.52)
    spec = mech.EdgeDriveSpec(
        motor=motor, gear_ratio=26.45, lever_gain=2.63,
        spool_radius_mm=5.0, max_cable_tension_n=2.21, spring_force_n=0.3)
    assert edge_effective_step_deg(spec) == pytest.approx(8.0 / 26.45)
    assert edge_effective_step_deg(spec) == pytest.approx(0.3025, abs=5e-4)


def test_edge_cable_travel_zero():
    assert edge_steps_to_cable_mm(0, CFG.edge) == 0.0


def test_edge_cable_travel_single_step():
    expected = math.radians(18.0 / 26.45) * 5.0
    got = edge_steps_to_cable_mm(1, CFG.edge)
    assert got == pytest.approx(expected)
    assert round(got, 4) == 0.0594


def test_edge_cable_quantization_nearest_step():
    # 1.5 mm / 0.059387 mm per step = 25.26, nearest whole step is 25
    per_step = edge_steps_to_cable_mm(1, CFG.edge)
    oracle = quantize_oracle(Fraction(3, 2), Fraction(per_step))
    steps = edge_cable_mm_to_steps(1.5, CFG.edge)
    assert steps == oracle == 25
    assert edge_steps_to_cable_mm(steps, CFG.edge) == pytest.approx(1.48468, abs=1e-4)


@given(st.integers(min_value=-200, max_value=200))
def test_edge_cable_monotone_in_steps(steps):
    a = edge_steps_to_cable_mm(steps, CFG.edge)
    b = edge_steps_to_cable_mm(steps + 1, CFG.edge)
    assert b > a


def test_edge_net_force_paper_maximum():
    no_spring = mech.EdgeDriveSpec(
        motor=CFG.edge.motor, gear_ratio=26.45, lever_gain=2.63,
        spool_radius_mm=5.0, max_cable_tension_n=2.21, spring_force_n=0.0)
    assert edge_net_force_n(2.21, no_spring) == pytest.approx(5.8123)


def test_edge_net_force_zero_tension_clamps():
    assert edge_net_force_n(0.0, CFG.edge) == 0.0


def test_edge_net_force_spring_balance():
    spec = mech.EdgeDriveSpec(
        motor=CFG.edge.motor, gear_ratio=26.45, lever_gain=2.63,
        spool_radius_mm=5.0, max_cable_tension_n=2.21, spring_force_n=0.5)
    # force balance oracle: lever_gain * tension - spring
    assert edge_net_force_n(1.0, spec) == pytest.approx(2.63 * 1.0 - 0.5)


def test_edge_net_force_rejects_out_of_range_tension():
    with pytest.raises(RangeError):
        edge_net_force_n(-0.1, CFG.edge)
    with pytest.raises(RangeError):
        edge_net_force_n(2.3, CFG.edge)


@given(
    st.floats(min_value=0.0, max_value=2.21, allow_nan=False),
    st.floats(min_value=0.0, max_value=2.21, allow_nan=False),
    st.floats(min_value=0.0, max_value=5.0, allow_nan=False),
)
def test_edge_net_force_monotone_and_nonnegative(t1, t2, spring):
    spec = mech.EdgeDriveSpec(
        motor=CFG.edge.motor, gear_ratio=26.45, lever_gain=2.63,
        spool_radius_mm=5.0, max_cable_tension_n=2.21, spring_force_n=spring)
    lo, hi = sorted((t1, t2))
    f_lo, f_hi = edge_net_force_n(lo, spec), edge_net_force_n(hi, spec)
    assert 0.0 <= f_lo <= f_hi
    # stiffer spring never increases output
    stiffer = mech.EdgeDriveSpec(
        motor=CFG.edge.motor, gear_ratio=26.45, lever_gain=2.63,
        spool_radius_mm=5.0, max_cable_tension_n=2.21, spring_force_n=spring + 0.5)
    assert edge_net_force_n(hi, stiffer) <= f_hi


# ---------------------------------------------------------------------------
# timing and power

def test_motion_duration_division():
    assert motion_duration_s(47, 200.0) == pytest.approx(0.235)
    assert motion_duration_s(0, 200.0) == 0.0
    assert motion_duration_s(200, 200.0) == 1.0


@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=0, max_value=10_000))
def test_motion_duration_additive(a, b):
    total = motion_duration_s(a + b, 200.0)
    assert total == pytest.approx(motion_duration_s(a, 200.0) + motion_duration_s(b, 200.0))


def test_endurance_paper_loads():
    assert CFG.power.energy_wh == pytest.approx(7.4)
    assert endurance_h(CFG.power) == pytest.approx(7.4 / 1.28)
    assert endurance_h(CFG.power) == pytest.approx(5.78, abs=5e-3)


def test_endurance_single_and_unit_loads():
    assert endurance_h(CFG.power, ("surface",)) == pytest.approx(7.4 / 0.76)
    assert round(endurance_h(CFG.power, ("surface",)), 2) == 9.74
    unit = mech.PowerBudget(3.7, 2000.0, (("heater", 7.4),))
    assert endurance_h(unit) == pytest.approx(1.0)


def test_endurance_decreases_with_added_loads():
    assert endurance_h(CFG.power) < endurance_h(CFG.power, ("surface",))
    assert endurance_h(CFG.power) < endurance_h(CFG.power, ("edge",))


def test_endurance_empty_active_set_rejected():
    with pytest.raises(ValueError):
        endurance_h(CFG.power, ())
    with pytest.raises(ValueError):
        endurance_h(CFG.power, ("laser",))


# ---------------------------------------------------------------------------
# spec invariants and config plumbing

def test_motor_step_angle_consistency_enforced():
    with pytest.raises(ConfigError):
        MotorSpec(8.0, 20, None, 200.0, 0.52)  # 8 * 20 != 360


def test_motor_positivity_enforced():
    with pytest.raises(ConfigError):
        MotorSpec(18.0, 20, -0.3, 200.0, 0.76)
    with pytest.raises(ConfigError):
        MotorSpec(18.0, 20, 0.3, 200.0, 0.0)


def test_config_text_roundtrip():
    text = mech.config_to_text(CFG)
    values = parse_kv_text(text)
    mech_keys, rest = mech.split_namespaces(values)
    assert not rest
    rebuilt = config_from_dict(mech_keys)
    assert rebuilt == CFG


def test_config_override_spool_radius():
    values = parse_kv_text("edge.spool_radius_mm = 10.0\n")
    cfg = config_from_dict(values)
    assert cfg.edge.spool_radius_mm == 10.0
    assert cfg.edge_cable_mm_per_step == pytest.approx(2 * CFG.edge_cable_mm_per_step)


def test_config_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        config_from_dict({"edge.sprocket_teeth": 12})


def test_config_comments_and_blank_lines():
    values = parse_kv_text("# comment\n\nmotion.step_rate = 100  # trailing\n")
    assert values == {"motion.step_rate": 100}
    cfg = config_from_dict(values)
    assert cfg.step_rate == 100


def test_config_bad_line_reports_lineno():
    with pytest.raises(ConfigError, match="line 2"):
        parse_kv_text("motion.step_rate = 100\nnonsense\n")


def test_speed_properties():
    assert CFG.surface_speed_mm_s == pytest.approx(3.0)
    # cable speed uses the gearbox-divided output stepping rate
    per_step = edge_steps_to_cable_mm(1, CFG.edge)
    assert CFG.edge_cable_speed_mm_s == pytest.approx(per_step * 200.0 / 26.45)
