"""Walk through the mechanism arithmetic with the shipped constants.

Run: python3 demos/01_mechanism_numbers.py
"""

from edgesim.mech import (
    default_config,
    edge_effective_step_deg,
    edge_net_force_n,
    edge_steps_to_cable_mm,
    endurance_h,
    motion_duration_s,
    surface_mm_to_steps,
    surface_steps_to_mm,
)

cfg = default_config()

print("== surface chain (linear stepper pressing the contact plate) ==")
print(f"stroke per revolution: {cfg.surface.motor.stroke_per_rev_mm} mm over "
      f"{cfg.surface.motor.steps_per_rev} steps")
print(f"per-step travel: {surface_steps_to_mm(1, cfg.surface)} mm")
print(f"full stroke range: {cfg.surface.stroke_range_mm} mm, "
      f"rated force {cfg.surface.max_force_n} N")

for target in (0.35, 0.70):
    steps = surface_mm_to_steps(target, cfg.surface)
    realized = surface_steps_to_mm(steps, cfg.surface)
    print(f"commanding {target} mm -> {steps} steps -> {realized:.3f} mm realized "
          f"({motion_duration_s(abs(steps), cfg.step_rate) * 1000:.0f} ms "
          f"at {cfg.step_rate:.0f} steps/s)")

print()
print("== edge chain (geared cable drive pushing the blade) ==")
print(f"motor step {cfg.edge.motor.step_angle_deg} deg through "
      f"{cfg.edge.gear_ratio}:1 gearbox -> "
      f"{edge_effective_step_deg(cfg.edge):.4f} deg effective")
per_step = edge_steps_to_cable_mm(1, cfg.edge)
print(f"cable take-up per step on the {cfg.edge.spool_radius_mm} mm spool: "
      f"{per_step:.4f} mm")
print(f"cable speed at {cfg.step_rate:.0f} steps/s (gearbox-divided): "
      f"{cfg.edge_cable_speed_mm_s:.3f} mm/s")
print(f"max cable tension {cfg.edge.max_cable_tension_n} N x lever "
      f"{cfg.edge.lever_gain} - spring {cfg.edge.spring_force_n} N -> "
      f"{edge_net_force_n(cfg.edge.max_cable_tension_n, cfg.edge):.2f} N "
      f"peak blade force")

print()
print("== power budget ==")
print(f"battery: {cfg.power.battery_voltage_v} V x "
      f"{cfg.power.battery_capacity_mah:.0f} mAh = {cfg.power.energy_wh} Wh")
for label, watts in cfg.power.loads:
    print(f"  load {label}: {watts} W alone -> "
          f"{endurance_h(cfg.power, (label,)):.2f} h")
print(f"both motors continuously: {endurance_h(cfg.power):.2f} h")
